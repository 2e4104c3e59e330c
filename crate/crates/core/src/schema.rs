//! Declarative graph schemas and constraint checking.
//!
//! A schema fixes the entity, attribute and relation inventories and four
//! kinds of constraints: which entity types an attribute may decorate, which
//! entity types a relation may start and end at, attribute pairs that cannot
//! co-occur on one entity, and relation pairs that cannot co-occur on one
//! ordered node pair.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ElementRef, KnowledgeGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("{context} references undeclared {category} type {name:?}")]
    UnknownTypeReference {
        context: String,
        category: &'static str,
        name: String,
    },
    #[error("graph uses {category} type {name:?} which schema {schema:?} does not declare")]
    UnknownType {
        schema: String,
        category: &'static str,
        name: String,
    },
    #[error("cannot parse schema document: {0}")]
    Parse(String),
}

/// Allowed endpoint types of a relation. `None` leaves that end unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSignature {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SchemaDoc {
    name: String,
    entity_types: BTreeSet<String>,
    #[serde(default)]
    attribute_types: BTreeSet<String>,
    #[serde(default)]
    relation_types: BTreeSet<String>,
    #[serde(default)]
    attribute_domains: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    relation_signatures: BTreeMap<String, RelationSignature>,
    #[serde(default)]
    exclusive_attribute_pairs: BTreeSet<(String, String)>,
    #[serde(default)]
    exclusive_relation_pairs: BTreeSet<(String, String)>,
    #[serde(default)]
    causal_relation_types: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct Schema {
    doc: SchemaDoc,
}

impl From<Schema> for SchemaDoc {
    fn from(s: Schema) -> Self {
        s.doc
    }
}

impl TryFrom<SchemaDoc> for Schema {
    type Error = SchemaError;

    fn try_from(mut doc: SchemaDoc) -> Result<Self, Self::Error> {
        let refer =
            |context: String, category: &'static str, set: &BTreeSet<String>, name: &str| {
                if set.contains(name) {
                    Ok(())
                } else {
                    Err(SchemaError::UnknownTypeReference {
                        context,
                        category,
                        name: name.to_string(),
                    })
                }
            };
        for (attr, domain) in &doc.attribute_domains {
            refer(
                "attribute_domains".into(),
                "attribute",
                &doc.attribute_types,
                attr,
            )?;
            for t in domain {
                refer(
                    format!("attribute domain of {attr}"),
                    "entity",
                    &doc.entity_types,
                    t,
                )?;
            }
        }
        for (rel, sig) in &doc.relation_signatures {
            refer(
                "relation_signatures".into(),
                "relation",
                &doc.relation_types,
                rel,
            )?;
            for t in sig.head.iter().chain(sig.tail.iter()).flatten() {
                refer(
                    format!("signature of {rel}"),
                    "entity",
                    &doc.entity_types,
                    t,
                )?;
            }
        }
        for (a, b) in &doc.exclusive_attribute_pairs {
            refer(
                "exclusive_attribute_pairs".into(),
                "attribute",
                &doc.attribute_types,
                a,
            )?;
            refer(
                "exclusive_attribute_pairs".into(),
                "attribute",
                &doc.attribute_types,
                b,
            )?;
        }
        for (a, b) in &doc.exclusive_relation_pairs {
            refer(
                "exclusive_relation_pairs".into(),
                "relation",
                &doc.relation_types,
                a,
            )?;
            refer(
                "exclusive_relation_pairs".into(),
                "relation",
                &doc.relation_types,
                b,
            )?;
        }
        for r in &doc.causal_relation_types {
            refer(
                "causal_relation_types".into(),
                "relation",
                &doc.relation_types,
                r,
            )?;
        }
        // pairs are unordered
        doc.exclusive_attribute_pairs = normalize_pairs(&doc.exclusive_attribute_pairs);
        doc.exclusive_relation_pairs = normalize_pairs(&doc.exclusive_relation_pairs);
        Ok(Schema { doc })
    }
}

fn normalize_pairs(pairs: &BTreeSet<(String, String)>) -> BTreeSet<(String, String)> {
    pairs
        .iter()
        .map(|(a, b)| {
            if a <= b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            }
        })
        .collect()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn pair(a: &str, b: &str) -> (String, String) {
    (a.to_string(), b.to_string())
}

/// Resolves a built-in schema name or parses a JSON schema document.
pub fn load_schema(document: &str) -> Result<Schema, SchemaError> {
    match document.trim() {
        "sciclaim" => Ok(Schema::sciclaim()),
        "ethno" => Ok(Schema::ethno()),
        text => Schema::from_json(text),
    }
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Schema, SchemaError> {
        let doc: SchemaDoc =
            serde_json::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
        Schema::try_from(doc)
    }

    pub fn builtin(name: &str) -> Option<Schema> {
        match name {
            "sciclaim" => Some(Schema::sciclaim()),
            "ethno" => Some(Schema::ethno()),
            _ => None,
        }
    }

    /// Scientific-claim schema: factors, associations and their qualifiers.
    pub fn sciclaim() -> Schema {
        let attrs = [
            "causation",
            "comparison",
            "indicates",
            "sign+",
            "sign-",
            "correlation",
            "test",
        ];
        let association = set(&["association"]);
        let argument = RelationSignature {
            head: Some(association.clone()),
            tail: Some(set(&["factor", "association"])),
        };
        let monotonic = RelationSignature {
            head: Some(set(&["factor", "association"])),
            tail: Some(set(&["factor"])),
        };
        let doc = SchemaDoc {
            name: "sciclaim".into(),
            entity_types: set(&[
                "factor",
                "evidence",
                "epistemic",
                "association",
                "magnitude",
                "qualifier",
            ]),
            attribute_types: set(&attrs),
            relation_types: set(&["arg0", "arg1", "comp_to", "modifier", "subtype", "q+", "q-"]),
            attribute_domains: attrs
                .iter()
                .map(|a| (a.to_string(), association.clone()))
                .collect(),
            relation_signatures: BTreeMap::from([
                ("arg0".to_string(), argument.clone()),
                ("arg1".to_string(), argument.clone()),
                ("comp_to".to_string(), argument),
                ("q+".to_string(), monotonic.clone()),
                ("q-".to_string(), monotonic),
                (
                    "subtype".to_string(),
                    RelationSignature {
                        head: Some(set(&["factor"])),
                        tail: Some(set(&["factor"])),
                    },
                ),
            ]),
            exclusive_attribute_pairs: BTreeSet::from([pair("sign+", "sign-")]),
            exclusive_relation_pairs: BTreeSet::from([pair("q+", "q-")]),
            causal_relation_types: set(&["q+", "q-"]),
        };
        Schema::try_from(doc).expect("built-in schema is consistent")
    }

    /// Ethnographic mental-model schema with intentional and functional causality.
    pub fn ethno() -> Schema {
        let doc = SchemaDoc {
            name: "ethno".into(),
            entity_types: set(&["element", "qualifier"]),
            attribute_types: set(&["tradition", "event", "influence", "prescribed", "negated"]),
            relation_types: set(&[
                "agent",
                "object",
                "recipient",
                "consequent",
                "modifier",
                "intent+",
                "function+",
                "q+",
                "q-",
                "t+",
            ]),
            attribute_domains: BTreeMap::new(),
            relation_signatures: BTreeMap::new(),
            exclusive_attribute_pairs: BTreeSet::new(),
            exclusive_relation_pairs: BTreeSet::from([pair("q+", "q-")]),
            causal_relation_types: set(&["q+", "q-", "intent+", "function+", "t+"]),
        };
        Schema::try_from(doc).expect("built-in schema is consistent")
    }

    pub fn name(&self) -> &str {
        &self.doc.name
    }

    pub fn entity_types(&self) -> &BTreeSet<String> {
        &self.doc.entity_types
    }

    pub fn attribute_types(&self) -> &BTreeSet<String> {
        &self.doc.attribute_types
    }

    pub fn relation_types(&self) -> &BTreeSet<String> {
        &self.doc.relation_types
    }

    pub fn causal_relation_types(&self) -> &BTreeSet<String> {
        &self.doc.causal_relation_types
    }

    pub fn is_causal(&self, relation_type: &str) -> bool {
        self.doc.causal_relation_types.contains(relation_type)
    }

    pub fn attribute_allowed_on(&self, attribute_type: &str, entity_type: &str) -> bool {
        self.doc
            .attribute_domains
            .get(attribute_type)
            .is_none_or(|d| d.contains(entity_type))
    }

    /// Returns whether the head and tail types are each permitted.
    pub fn relation_endpoints_allowed(
        &self,
        relation_type: &str,
        head: &str,
        tail: &str,
    ) -> (bool, bool) {
        match self.doc.relation_signatures.get(relation_type) {
            None => (true, true),
            Some(sig) => (
                sig.head.as_ref().is_none_or(|h| h.contains(head)),
                sig.tail.as_ref().is_none_or(|t| t.contains(tail)),
            ),
        }
    }

    pub fn exclusive_attribute_pairs(&self) -> &BTreeSet<(String, String)> {
        &self.doc.exclusive_attribute_pairs
    }

    pub fn exclusive_relation_pairs(&self) -> &BTreeSet<(String, String)> {
        &self.doc.exclusive_relation_pairs
    }

    /// Fails on the first entity, attribute or relation type the schema lacks.
    pub fn check_types(&self, graph: &KnowledgeGraph) -> Result<(), SchemaError> {
        let unknown = |category, name: &str| SchemaError::UnknownType {
            schema: self.doc.name.clone(),
            category,
            name: name.to_string(),
        };
        for e in graph.entities() {
            if !self.doc.entity_types.contains(&e.entity_type) {
                return Err(unknown("entity", &e.entity_type));
            }
            for a in &e.attributes {
                if !self.doc.attribute_types.contains(&a.attribute_type) {
                    return Err(unknown("attribute", &a.attribute_type));
                }
            }
        }
        for r in graph.relations() {
            if !self.doc.relation_types.contains(&r.relation_type) {
                return Err(unknown("relation", &r.relation_type));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    AttributeDomain,
    RelationSignature,
    ExclusiveAttributes,
    ExclusiveRelations,
}

/// One constraint failure. `confidences[i]` belongs to `elements[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub elements: Vec<ElementRef>,
    pub confidences: Vec<f64>,
}

impl Violation {
    fn new(graph: &KnowledgeGraph, kind: ViolationKind, elements: Vec<ElementRef>) -> Self {
        let confidences = elements
            .iter()
            .map(|e| graph.confidence_of(e).expect("violation element resolves"))
            .collect();
        Violation {
            kind,
            elements,
            confidences,
        }
    }
}

/// Lists every schema violation in `graph`, in a canonical order.
pub fn check_constraints(
    graph: &KnowledgeGraph,
    schema: &Schema,
) -> Result<Vec<Violation>, SchemaError> {
    schema.check_types(graph)?;
    let mut out = Vec::new();

    for e in graph.entities() {
        for a in &e.attributes {
            if !schema.attribute_allowed_on(&a.attribute_type, &e.entity_type) {
                out.push(Violation::new(
                    graph,
                    ViolationKind::AttributeDomain,
                    vec![
                        ElementRef::attribute(e.id, &a.attribute_type),
                        ElementRef::Entity { entity: e.id },
                    ],
                ));
            }
        }
        for (x, y) in schema.exclusive_attribute_pairs() {
            if e.has_attribute(x) && e.has_attribute(y) {
                out.push(Violation::new(
                    graph,
                    ViolationKind::ExclusiveAttributes,
                    vec![
                        ElementRef::attribute(e.id, x),
                        ElementRef::attribute(e.id, y),
                    ],
                ));
            }
        }
    }

    let mut by_pair: BTreeMap<_, BTreeSet<&str>> = BTreeMap::new();
    for r in graph.relations() {
        let head = graph.entity(r.head).expect("validated graph");
        let tail = graph.entity(r.tail).expect("validated graph");
        let (head_ok, tail_ok) = schema.relation_endpoints_allowed(
            &r.relation_type,
            &head.entity_type,
            &tail.entity_type,
        );
        if !(head_ok && tail_ok) {
            let mut elements = vec![ElementRef::relation(r)];
            if !head_ok {
                elements.push(ElementRef::Entity { entity: r.head });
            }
            if !tail_ok {
                elements.push(ElementRef::Entity { entity: r.tail });
            }
            out.push(Violation::new(
                graph,
                ViolationKind::RelationSignature,
                elements,
            ));
        }
        by_pair
            .entry((r.head, r.tail))
            .or_default()
            .insert(&r.relation_type);
    }
    for ((head, tail), types) in &by_pair {
        for (x, y) in schema.exclusive_relation_pairs() {
            if types.contains(x.as_str()) && types.contains(y.as_str()) {
                let rel = |t: &str| ElementRef::Relation {
                    head: *head,
                    tail: *tail,
                    relation_type: t.to_string(),
                };
                out.push(Violation::new(
                    graph,
                    ViolationKind::ExclusiveRelations,
                    vec![rel(x), rel(y)],
                ));
            }
        }
    }

    out.sort_by(|a, b| (a.kind, &a.elements).cmp(&(b.kind, &b.elements)));
    Ok(out)
}
