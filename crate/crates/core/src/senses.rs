//! Sense inventories, dot-product sense linking and taxonomy similarity.
//!
//! An inventory file has one tab-separated record per line:
//! `sense_id  lemma  parent_id|-  f1 ... fd`. Glosses live in a separate
//! `sense_id  gloss` file and the skip list in a `lemma  category` file.
//! Blank lines and lines starting with `#` are ignored in all three.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::normalize;
use crate::graph::{Entity, EntityId, GraphError, KnowledgeGraph, SenseScore};

pub const DEFAULT_SENSE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SenseError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate sense id {0}")]
    DuplicateSense(String),
    #[error("sense {sense} has unknown parent {parent}")]
    UnknownParent { sense: String, parent: String },
    #[error("parent links of sense {0} form a cycle")]
    Cycle(String),
    #[error("unknown sense {0}")]
    UnknownSense(String),
    #[error("vector of {0} is all zeros")]
    ZeroVector(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("senses {0} and {1} are in different trees")]
    DisjointTrees(String, String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sense {
    pub id: String,
    pub lemma: String,
    #[serde(default)]
    pub gloss: Option<String>,
    #[serde(default)]
    pub parent: Option<String>,
    pub vector: Vec<f64>,
}

/// A validated taxonomy of senses with unit-norm vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SenseInventory {
    senses: Vec<Sense>,
    index: HashMap<String, usize>,
    skip: BTreeMap<String, String>,
    dimension: usize,
}

fn read(path: &Path) -> Result<String, SenseError> {
    std::fs::read_to_string(path).map_err(|source| SenseError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        (!l.trim().is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split('\t').collect()))
    })
}

impl SenseInventory {
    /// Validates the forest structure and unit-normalizes every vector.
    pub fn new(mut senses: Vec<Sense>) -> Result<Self, SenseError> {
        let dimension = senses.first().map_or(0, |s| s.vector.len());
        let mut index = HashMap::with_capacity(senses.len());
        for (i, s) in senses.iter_mut().enumerate() {
            if s.vector.len() != dimension {
                return Err(SenseError::DimensionMismatch {
                    expected: dimension,
                    found: s.vector.len(),
                });
            }
            if !normalize(&mut s.vector) {
                return Err(SenseError::ZeroVector(s.id.clone()));
            }
            if index.insert(s.id.clone(), i).is_some() {
                return Err(SenseError::DuplicateSense(s.id.clone()));
            }
        }
        let inv = Self {
            senses,
            index,
            skip: BTreeMap::new(),
            dimension,
        };
        for s in &inv.senses {
            if let Some(p) = &s.parent {
                if !inv.index.contains_key(p) {
                    return Err(SenseError::UnknownParent {
                        sense: s.id.clone(),
                        parent: p.clone(),
                    });
                }
            }
            inv.ancestors(&s.id)?;
        }
        Ok(inv)
    }

    pub fn parse(text: &str) -> Result<Self, SenseError> {
        let mut senses = Vec::new();
        for (line, fields) in records(text) {
            if fields.len() < 4 {
                return Err(SenseError::Parse {
                    line,
                    message: "expected sense_id, lemma, parent and at least one component".into(),
                });
            }
            let vector = fields[3..]
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| SenseError::Parse {
                    line,
                    message: e.to_string(),
                })?;
            senses.push(Sense {
                id: fields[0].to_string(),
                lemma: fields[1].to_string(),
                gloss: None,
                parent: (fields[2] != "-").then(|| fields[2].to_string()),
                vector,
            });
        }
        Self::new(senses)
    }

    pub fn load(path: &Path) -> Result<Self, SenseError> {
        Self::parse(&read(path)?)
    }

    /// Attaches glosses from `sense_id<TAB>gloss` lines.
    pub fn with_glosses(mut self, text: &str) -> Result<Self, SenseError> {
        for (line, fields) in records(text) {
            let [id, gloss] = fields[..] else {
                return Err(SenseError::Parse {
                    line,
                    message: "expected sense_id and gloss".into(),
                });
            };
            let i = *self
                .index
                .get(id)
                .ok_or_else(|| SenseError::UnknownSense(id.to_string()))?;
            self.senses[i].gloss = Some(gloss.to_string());
        }
        Ok(self)
    }

    /// Adds skipped lemmas from `lemma<TAB>category` lines; the category is optional.
    pub fn with_skip_list(mut self, text: &str) -> Result<Self, SenseError> {
        for (line, fields) in records(text) {
            match fields[..] {
                [lemma] => self.skip.insert(lemma.to_lowercase(), String::new()),
                [lemma, category] => self.skip.insert(lemma.to_lowercase(), category.to_string()),
                _ => {
                    return Err(SenseError::Parse {
                        line,
                        message: "expected lemma and optional category".into(),
                    })
                }
            };
        }
        Ok(self)
    }

    pub fn load_glosses(self, path: &Path) -> Result<Self, SenseError> {
        let text = read(path)?;
        self.with_glosses(&text)
    }

    pub fn load_skip_list(self, path: &Path) -> Result<Self, SenseError> {
        let text = read(path)?;
        self.with_skip_list(&text)
    }

    pub fn senses(&self) -> &[Sense] {
        &self.senses
    }

    pub fn sense(&self, id: &str) -> Option<&Sense> {
        self.index.get(id).map(|&i| &self.senses[i])
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_skipped(&self, lemma: &str) -> bool {
        self.skip.contains_key(lemma)
    }

    /// The sense itself followed by its ancestors up to the root.
    pub fn ancestors(&self, id: &str) -> Result<Vec<&str>, SenseError> {
        let mut chain = Vec::new();
        let mut cur = self
            .sense(id)
            .ok_or_else(|| SenseError::UnknownSense(id.to_string()))?;
        loop {
            chain.push(cur.id.as_str());
            if chain.len() > self.senses.len() {
                return Err(SenseError::Cycle(id.to_string()));
            }
            match &cur.parent {
                Some(p) => cur = &self.senses[self.index[p]],
                None => return Ok(chain),
            }
        }
    }

    /// Root depth is 1.
    pub fn depth(&self, id: &str) -> Result<usize, SenseError> {
        self.ancestors(id).map(|a| a.len())
    }
}

/// Mean of the node's token vectors, unit-normalized.
pub fn node_vector(node: &Entity, token_vectors: &[Vec<f64>]) -> Result<Vec<f64>, SenseError> {
    let rows = token_vectors
        .get(node.span.indices())
        .ok_or(GraphError::SpanOutOfBounds {
            span: node.span,
            tokens: token_vectors.len(),
        })?;
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        if r.len() != d {
            return Err(SenseError::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    if !normalize(&mut mean) {
        return Err(SenseError::ZeroVector(node.id.to_string()));
    }
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseAssignment {
    pub node: EntityId,
    pub senses: Vec<SenseScore>,
}

/// Scores every sense against every non-skipped node and keeps those above
/// `threshold`, best first (ties by sense id). A node is skipped when all of
/// its lemmas are on the skip list.
pub fn assign_senses(
    graph: &KnowledgeGraph,
    token_vectors: &[Vec<f64>],
    inventory: &SenseInventory,
    threshold: f64,
) -> Result<Vec<SenseAssignment>, SenseError> {
    if let Some(v) = token_vectors.first() {
        if v.len() != inventory.dimension() && !inventory.senses().is_empty() {
            return Err(SenseError::DimensionMismatch {
                expected: inventory.dimension(),
                found: v.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(graph.node_count());
    for e in graph.entities() {
        let lemmas = graph.entity_lemmas(e.id);
        if lemmas.iter().all(|l| inventory.is_skipped(l)) {
            out.push(SenseAssignment {
                node: e.id,
                senses: Vec::new(),
            });
            continue;
        }
        let v = node_vector(e, token_vectors)?;
        let mut senses: Vec<SenseScore> = inventory
            .senses()
            .iter()
            .map(|s| SenseScore {
                sense: s.id.clone(),
                // unit vectors can overshoot 1 by rounding
                confidence: crate::nn::dot(&v, &s.vector).min(1.0),
            })
            .filter(|s| s.confidence > threshold)
            .collect();
        senses.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| a.sense.cmp(&b.sense))
        });
        out.push(SenseAssignment { node: e.id, senses });
    }
    Ok(out)
}

/// Copy of `graph` whose nodes carry their sense assignments.
pub fn link_senses(
    graph: &KnowledgeGraph,
    token_vectors: &[Vec<f64>],
    inventory: &SenseInventory,
    threshold: f64,
) -> Result<KnowledgeGraph, SenseError> {
    let by_node: BTreeMap<EntityId, Vec<SenseScore>> =
        assign_senses(graph, token_vectors, inventory, threshold)?
            .into_iter()
            .map(|a| (a.node, a.senses))
            .collect();
    Ok(graph.with_senses(&by_node)?)
}

/// `2 depth(lca) / (depth(a) + depth(b))`, with the root at depth 1.
pub fn lca_similarity(a: &str, b: &str, inventory: &SenseInventory) -> Result<f64, SenseError> {
    let pa = inventory.ancestors(a)?;
    let pb = inventory.ancestors(b)?;
    let in_b: BTreeSet<&str> = pb.iter().copied().collect();
    let lca = pa
        .iter()
        .find(|s| in_b.contains(*s))
        .ok_or_else(|| SenseError::DisjointTrees(a.to_string(), b.to_string()))?;
    let depth = inventory.depth(lca)?;
    Ok(2.0 * depth as f64 / (pa.len() + pb.len()) as f64)
}
