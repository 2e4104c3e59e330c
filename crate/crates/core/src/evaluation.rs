//! Exact-match precision, recall and F1 for entities, attributes and relations.
//!
//! An entity matches when its span and type equal a gold entity. An attribute
//! matches when its label sits on a matched entity, and a relation matches
//! when its label joins two matched entities. Scores are percentages; an
//! undefined score is `None` and renders as `--`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{KnowledgeGraph, Span};
use crate::schema::Schema;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot align predictions with gold: {0}")]
    Alignment(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| 100.0 * self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| 100.0 * self.tp as f64 / d as f64)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }

    fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: usize,
}

impl ClassScore {
    fn new(class: &str, counts: Counts) -> Self {
        ClassScore {
            class: class.to_string(),
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            support: counts.support(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionScore {
    pub classes: Vec<ClassScore>,
    /// Pooled over classes with nonzero support.
    pub micro: ClassScore,
}

impl SectionScore {
    fn new(counts: &BTreeMap<String, Counts>) -> Self {
        let mut pooled = Counts::default();
        for c in counts.values().filter(|c| c.support() > 0) {
            pooled.add(*c);
        }
        SectionScore {
            classes: counts.iter().map(|(k, c)| ClassScore::new(k, *c)).collect(),
            micro: ClassScore::new("micro", pooled),
        }
    }

    pub fn class(&self, name: &str) -> Option<&ClassScore> {
        self.classes.iter().find(|c| c.class == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub entities: SectionScore,
    pub attributes: SectionScore,
    pub relations: SectionScore,
}

type EntityKey = (Span, String);

#[derive(Default)]
struct Tally {
    entities: BTreeMap<String, Counts>,
    attributes: BTreeMap<String, Counts>,
    relations: BTreeMap<String, Counts>,
}

fn count<K: Ord + Clone>(
    into: &mut BTreeMap<String, Counts>,
    pred: &BTreeSet<(String, K)>,
    gold: &BTreeSet<(String, K)>,
) {
    for item in pred {
        let c = into.entry(item.0.clone()).or_default();
        if gold.contains(item) {
            c.tp += 1;
        } else {
            c.fp += 1;
        }
    }
    for item in gold.difference(pred) {
        into.entry(item.0.clone()).or_default().fn_ += 1;
    }
}

type Keys = (
    BTreeSet<(String, EntityKey)>,
    BTreeSet<(String, EntityKey)>,
    BTreeSet<(String, (EntityKey, EntityKey))>,
);

fn keys(g: &KnowledgeGraph) -> Keys {
    let key = |id| {
        let e = g.entity(id).expect("validated graph");
        (e.span, e.entity_type.clone())
    };
    let mut entities = BTreeSet::new();
    let mut attributes = BTreeSet::new();
    for e in g.entities() {
        entities.insert((e.entity_type.clone(), (e.span, e.entity_type.clone())));
        for a in &e.attributes {
            attributes.insert((a.attribute_type.clone(), (e.span, e.entity_type.clone())));
        }
    }
    let relations = g
        .relations()
        .iter()
        .map(|r| (r.relation_type.clone(), (key(r.head), key(r.tail))))
        .collect();
    (entities, attributes, relations)
}

fn align<'a>(
    predicted: &'a [KnowledgeGraph],
    gold: &'a [KnowledgeGraph],
) -> Result<Vec<(&'a KnowledgeGraph, &'a KnowledgeGraph)>, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::Alignment(format!(
            "{} predicted graphs for {} gold graphs",
            predicted.len(),
            gold.len()
        )));
    }
    let mut by_id: HashMap<&str, &KnowledgeGraph> = HashMap::with_capacity(gold.len());
    for g in gold {
        if by_id.insert(g.provenance(), g).is_some() {
            return Err(EvalError::Alignment(format!(
                "duplicate gold provenance {:?}",
                g.provenance()
            )));
        }
    }
    let mut pairs = Vec::with_capacity(predicted.len());
    for p in predicted {
        let g = by_id.remove(p.provenance()).ok_or_else(|| {
            EvalError::Alignment(format!("no gold graph for {:?}", p.provenance()))
        })?;
        if g.tokens() != p.tokens() {
            return Err(EvalError::Alignment(format!(
                "tokens differ for {:?}",
                p.provenance()
            )));
        }
        pairs.push((p, g));
    }
    Ok(pairs)
}

fn tally(predicted: &[KnowledgeGraph], gold: &[KnowledgeGraph]) -> Result<Tally, EvalError> {
    let mut t = Tally::default();
    for (p, g) in align(predicted, gold)? {
        let (pe, pa, pr) = keys(p);
        let (ge, ga, gr) = keys(g);
        count(&mut t.entities, &pe, &ge);
        count(&mut t.attributes, &pa, &ga);
        count(&mut t.relations, &pr, &gr);
    }
    Ok(t)
}

/// Scores predicted graphs against gold graphs paired by provenance,
/// reporting every class seen on either side.
pub fn score(
    predicted: &[KnowledgeGraph],
    gold: &[KnowledgeGraph],
) -> Result<ScoreReport, EvalError> {
    let t = tally(predicted, gold)?;
    Ok(ScoreReport {
        entities: SectionScore::new(&t.entities),
        attributes: SectionScore::new(&t.attributes),
        relations: SectionScore::new(&t.relations),
    })
}

/// Like [`score`], but lists every class declared by `schema`.
pub fn score_with_schema(
    predicted: &[KnowledgeGraph],
    gold: &[KnowledgeGraph],
    schema: &Schema,
) -> Result<ScoreReport, EvalError> {
    let mut t = tally(predicted, gold)?;
    for (section, names) in [
        (&mut t.entities, schema.entity_types()),
        (&mut t.attributes, schema.attribute_types()),
        (&mut t.relations, schema.relation_types()),
    ] {
        for n in names {
            section.entry(n.clone()).or_default();
        }
    }
    Ok(ScoreReport {
        entities: SectionScore::new(&t.entities),
        attributes: SectionScore::new(&t.attributes),
        relations: SectionScore::new(&t.relations),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.2}"))
}

impl ScoreReport {
    /// Aligned plain-text table, one block per section.
    pub fn to_table(&self) -> String {
        let width = [&self.entities, &self.attributes, &self.relations]
            .iter()
            .flat_map(|s| s.classes.iter().map(|c| c.class.len()))
            .chain([14])
            .max()
            .unwrap_or(14);
        let mut out = String::new();
        for (title, section) in [
            ("Entities", &self.entities),
            ("Attributes", &self.attributes),
            ("Relations", &self.relations),
        ] {
            let _ = writeln!(
                out,
                "{title:<w$}  {:>7}  {:>7}  {:>7}  {:>7}",
                "P",
                "R",
                "F1",
                "Support",
                w = width + 2
            );
            for c in section.classes.iter().chain([&section.micro]) {
                let name = if c.class == "micro" {
                    "Micro-Averaged"
                } else {
                    &c.class
                };
                let _ = writeln!(
                    out,
                    "  {name:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
                    cell(c.precision),
                    cell(c.recall),
                    cell(c.f1),
                    c.support
                );
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
