//! Greedy confidence-ordered repair of schema violations.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::{ElementRef, KnowledgeGraph};
use crate::schema::{check_constraints, Schema, SchemaError, ViolationKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalRecord {
    #[serde(flatten)]
    pub element: ElementRef,
    pub confidence: f64,
    pub violation: ViolationKind,
    /// Removed because an entity it depends on was removed.
    pub cascade: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RemovalLog {
    pub records: Vec<RemovalRecord>,
}

impl RemovalLog {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

/// Graph JSON with the removal log attached under `rectification`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectifiedGraph {
    #[serde(flatten)]
    pub graph: KnowledgeGraph,
    pub rectification: RemovalLog,
}

fn key_cmp(a: &(f64, &ElementRef), b: &(f64, &ElementRef)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// Removes elements until `graph` satisfies every constraint of `schema`.
///
/// Each round picks, among all current violations, the participant with the
/// lowest `(confidence, kind, id)` key and removes it. Removing an entity also
/// removes its attributes and incident relations; those are logged right
/// after it with `cascade` set.
pub fn rectify(
    graph: &KnowledgeGraph,
    schema: &Schema,
) -> Result<(KnowledgeGraph, RemovalLog), SchemaError> {
    let mut current = graph.clone();
    let mut log = RemovalLog::default();
    loop {
        let violations = check_constraints(&current, schema)?;
        let choice = violations
            .iter()
            .flat_map(|v| {
                v.confidences
                    .iter()
                    .zip(&v.elements)
                    .map(move |(&c, e)| ((c, e), v.kind))
            })
            .min_by(|a, b| key_cmp(&a.0, &b.0));
        let Some(((confidence, element), kind)) = choice else {
            break;
        };
        let element = element.clone();

        log.records.push(RemovalRecord {
            element: element.clone(),
            confidence,
            violation: kind,
            cascade: false,
        });
        if let ElementRef::Entity { entity } = element {
            let e = current.entity(entity).expect("violation element exists");
            for a in &e.attributes {
                log.records.push(RemovalRecord {
                    element: ElementRef::attribute(entity, &a.attribute_type),
                    confidence: a.confidence,
                    violation: kind,
                    cascade: true,
                });
            }
            for r in current.relations() {
                if r.head == entity || r.tail == entity {
                    log.records.push(RemovalRecord {
                        element: ElementRef::relation(r),
                        confidence: r.confidence,
                        violation: kind,
                        cascade: true,
                    });
                }
            }
        }
        current = current.without(&BTreeSet::from([element]));
    }
    Ok((current, log))
}
