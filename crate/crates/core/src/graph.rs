//! Knowledge-graph data model.
//!
//! A [`KnowledgeGraph`] is a directed multigraph over typed entity spans of a
//! single tokenized passage. Entities carry multi-label attributes and optional
//! ranked word senses; relations are labeled directed edges. Every element has
//! a confidence in `[0, 1]`. Graphs are validated on construction and are not
//! mutated afterwards: operations that prune or annotate a graph build a new one.
//!
//! A [`CorpusGraph`] is the disjoint union of per-sentence graphs, optionally
//! joined by undirected lemma links between nodes of different sentences.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    /// # Panics
    ///
    /// Panics if `start >= end`.
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start < end, "empty span [{start}, {end})");
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    #[serde(rename = "type")]
    pub attribute_type: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseScore {
    pub sense: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    #[serde(flatten)]
    pub span: Span,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub confidence: f64,
    #[serde(default)]
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub senses: Vec<SenseScore>,
}

impl Entity {
    pub fn has_attribute(&self, attribute_type: &str) -> bool {
        self.attributes
            .iter()
            .any(|a| a.attribute_type == attribute_type)
    }

    pub fn attribute(&self, attribute_type: &str) -> Option<&Attribute> {
        self.attributes
            .iter()
            .find(|a| a.attribute_type == attribute_type)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub head: EntityId,
    pub tail: EntityId,
    #[serde(rename = "type")]
    pub relation_type: String,
    pub confidence: f64,
}

/// Addresses one removable graph element.
///
/// The derived ordering puts relations before attributes before entities,
/// then orders by id; the rectifier relies on it for tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementRef {
    Relation {
        head: EntityId,
        tail: EntityId,
        #[serde(rename = "type")]
        relation_type: String,
    },
    Attribute {
        entity: EntityId,
        #[serde(rename = "type")]
        attribute_type: String,
    },
    Entity {
        entity: EntityId,
    },
}

impl ElementRef {
    pub fn relation(r: &Relation) -> Self {
        ElementRef::Relation {
            head: r.head,
            tail: r.tail,
            relation_type: r.relation_type.clone(),
        }
    }

    pub fn attribute(entity: EntityId, attribute_type: &str) -> Self {
        ElementRef::Attribute {
            entity,
            attribute_type: attribute_type.to_string(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ElementRef::Relation { .. } => "relation",
            ElementRef::Attribute { .. } => "attribute",
            ElementRef::Entity { .. } => "entity",
        }
    }
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementRef::Relation {
                head,
                tail,
                relation_type,
            } => write!(f, "{head} -{relation_type}-> {tail}"),
            ElementRef::Attribute {
                entity,
                attribute_type,
            } => write!(f, "{entity}({attribute_type})"),
            ElementRef::Entity { entity } => write!(f, "{entity}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("relation {relation_type} on {entity} is a self-loop")]
    SelfLoop {
        entity: EntityId,
        relation_type: String,
    },
    #[error("span {span} already holds entity {existing}; cannot add {entity}")]
    DuplicateSpanType {
        span: Span,
        existing: EntityId,
        entity: EntityId,
    },
    #[error("confidence {value} of {element} is outside [0, 1]")]
    BadConfidence { element: String, value: f64 },
    #[error("{element} references missing entity {missing}")]
    DanglingReference { element: String, missing: String },
    #[error("span {span} is out of bounds for {tokens} tokens")]
    SpanOutOfBounds { span: Span, tokens: usize },
    #[error("{tokens} tokens but {lemmas} lemmas")]
    LengthMismatch { tokens: usize, lemmas: usize },
    #[error("entity id {0} is used more than once")]
    DuplicateEntityId(EntityId),
    #[error("entity {entity} carries attribute {attribute_type} more than once")]
    DuplicateAttribute {
        entity: EntityId,
        attribute_type: String,
    },
    #[error("relation {head} -{relation_type}-> {tail} appears more than once")]
    DuplicateRelation {
        head: EntityId,
        tail: EntityId,
        relation_type: String,
    },
    #[error("provenance {0:?} appears in more than one graph")]
    DuplicateProvenance(String),
}

/// Entity candidate passed to [`assemble_graph`]; ids are assigned by position.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityInput {
    pub span: Span,
    pub entity_type: String,
    pub confidence: f64,
}

/// Attribute candidate; `entity` indexes the entity input list.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeInput {
    pub entity: usize,
    pub attribute_type: String,
    pub confidence: f64,
}

/// Relation candidate; `head` and `tail` index the entity input list.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationInput {
    pub head: usize,
    pub tail: usize,
    pub relation_type: String,
    pub confidence: f64,
}

/// Lowercased tokens, used when a dataset provides no lemmas.
pub fn default_lemmas(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

/// Builds a validated graph from flat entity/attribute/relation lists.
///
/// Entity `i` receives id `EntityId(i)`.
pub fn assemble_graph(
    tokens: Vec<String>,
    lemmas: Option<Vec<String>>,
    entities: &[EntityInput],
    attributes: &[AttributeInput],
    relations: &[RelationInput],
) -> Result<KnowledgeGraph, GraphError> {
    let mut built: Vec<Entity> = entities
        .iter()
        .enumerate()
        .map(|(i, e)| Entity {
            id: EntityId(i as u32),
            span: e.span,
            entity_type: e.entity_type.clone(),
            confidence: e.confidence,
            attributes: Vec::new(),
            senses: Vec::new(),
        })
        .collect();
    for a in attributes {
        let target = built
            .get_mut(a.entity)
            .ok_or_else(|| GraphError::DanglingReference {
                element: format!("attribute {}", a.attribute_type),
                missing: format!("entity index {}", a.entity),
            })?;
        target.attributes.push(Attribute {
            attribute_type: a.attribute_type.clone(),
            confidence: a.confidence,
        });
    }
    let mut rels = Vec::with_capacity(relations.len());
    for r in relations {
        for end in [r.head, r.tail] {
            if end >= built.len() {
                return Err(GraphError::DanglingReference {
                    element: format!("relation {}", r.relation_type),
                    missing: format!("entity index {end}"),
                });
            }
        }
        rels.push(Relation {
            head: EntityId(r.head as u32),
            tail: EntityId(r.tail as u32),
            relation_type: r.relation_type.clone(),
            confidence: r.confidence,
        });
    }
    let lemmas = lemmas.unwrap_or_else(|| default_lemmas(&tokens));
    KnowledgeGraph::from_parts(tokens, lemmas, built, rels, String::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphDoc {
    tokens: Vec<String>,
    #[serde(default)]
    lemmas: Option<Vec<String>>,
    #[serde(default)]
    entities: Vec<Entity>,
    #[serde(default)]
    relations: Vec<Relation>,
    #[serde(default)]
    provenance: String,
}

/// A validated directed multigraph over the entity spans of one passage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GraphDoc", into = "GraphDoc")]
pub struct KnowledgeGraph {
    tokens: Vec<String>,
    lemmas: Vec<String>,
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    provenance: String,
    index: HashMap<EntityId, usize>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
            && self.lemmas == other.lemmas
            && self.entities == other.entities
            && self.relations == other.relations
            && self.provenance == other.provenance
    }
}

impl TryFrom<GraphDoc> for KnowledgeGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDoc) -> Result<Self, Self::Error> {
        let lemmas = doc.lemmas.unwrap_or_else(|| default_lemmas(&doc.tokens));
        KnowledgeGraph::from_parts(
            doc.tokens,
            lemmas,
            doc.entities,
            doc.relations,
            doc.provenance,
        )
    }
}

impl From<KnowledgeGraph> for GraphDoc {
    fn from(g: KnowledgeGraph) -> Self {
        GraphDoc {
            tokens: g.tokens,
            lemmas: Some(g.lemmas),
            entities: g.entities,
            relations: g.relations,
            provenance: g.provenance,
        }
    }
}

fn check_confidence(element: impl FnOnce() -> String, value: f64) -> Result<(), GraphError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(GraphError::BadConfidence {
            element: element(),
            value,
        })
    }
}

impl KnowledgeGraph {
    /// Validates every structural invariant and builds the id index.
    pub fn from_parts(
        tokens: Vec<String>,
        lemmas: Vec<String>,
        entities: Vec<Entity>,
        relations: Vec<Relation>,
        provenance: String,
    ) -> Result<Self, GraphError> {
        if tokens.len() != lemmas.len() {
            return Err(GraphError::LengthMismatch {
                tokens: tokens.len(),
                lemmas: lemmas.len(),
            });
        }
        let n = tokens.len();
        let mut index = HashMap::with_capacity(entities.len());
        let mut by_span: HashMap<Span, EntityId> = HashMap::with_capacity(entities.len());
        for (pos, e) in entities.iter().enumerate() {
            if index.insert(e.id, pos).is_some() {
                return Err(GraphError::DuplicateEntityId(e.id));
            }
            if e.span.start >= e.span.end || e.span.end > n {
                return Err(GraphError::SpanOutOfBounds {
                    span: e.span,
                    tokens: n,
                });
            }
            if let Some(&existing) = by_span.get(&e.span) {
                return Err(GraphError::DuplicateSpanType {
                    span: e.span,
                    existing,
                    entity: e.id,
                });
            }
            by_span.insert(e.span, e.id);
            check_confidence(|| format!("entity {}", e.id), e.confidence)?;
            let mut seen = HashSet::new();
            for a in &e.attributes {
                if !seen.insert(a.attribute_type.as_str()) {
                    return Err(GraphError::DuplicateAttribute {
                        entity: e.id,
                        attribute_type: a.attribute_type.clone(),
                    });
                }
                check_confidence(
                    || format!("attribute {} on {}", a.attribute_type, e.id),
                    a.confidence,
                )?;
            }
            for s in &e.senses {
                check_confidence(|| format!("sense {} on {}", s.sense, e.id), s.confidence)?;
            }
        }
        let mut seen_edges = HashSet::with_capacity(relations.len());
        for r in &relations {
            for end in [r.head, r.tail] {
                if !index.contains_key(&end) {
                    return Err(GraphError::DanglingReference {
                        element: format!("relation {}", r.relation_type),
                        missing: end.to_string(),
                    });
                }
            }
            if r.head == r.tail {
                return Err(GraphError::SelfLoop {
                    entity: r.head,
                    relation_type: r.relation_type.clone(),
                });
            }
            if !seen_edges.insert((r.head, r.tail, r.relation_type.as_str())) {
                return Err(GraphError::DuplicateRelation {
                    head: r.head,
                    tail: r.tail,
                    relation_type: r.relation_type.clone(),
                });
            }
            check_confidence(
                || format!("relation {} -{}-> {}", r.head, r.relation_type, r.tail),
                r.confidence,
            )?;
        }
        Ok(Self {
            tokens,
            lemmas,
            entities,
            relations,
            provenance,
            index,
        })
    }

    pub fn empty(tokens: Vec<String>) -> Self {
        let lemmas = default_lemmas(&tokens);
        Self::from_parts(tokens, lemmas, Vec::new(), Vec::new(), String::new())
            .expect("an empty graph is always valid")
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lemmas(&self) -> &[String] {
        &self.lemmas
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.index.get(&id).map(|&i| &self.entities[i])
    }

    pub fn node_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.relations.len()
    }

    pub fn attribute_count(&self) -> usize {
        self.entities.iter().map(|e| e.attributes.len()).sum()
    }

    pub fn span_text(&self, span: Span) -> String {
        self.tokens[span.indices()].join(" ")
    }

    /// Distinct lemmas of the tokens covered by an entity.
    pub fn entity_lemmas(&self, id: EntityId) -> BTreeSet<&str> {
        self.entity(id)
            .map(|e| {
                self.lemmas[e.span.indices()]
                    .iter()
                    .map(String::as_str)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn outgoing(&self, id: EntityId) -> impl Iterator<Item = &Relation> {
        self.relations.iter().filter(move |r| r.head == id)
    }

    /// Every element of the graph with its confidence.
    pub fn elements(&self) -> Vec<(ElementRef, f64)> {
        let mut out = Vec::new();
        for e in &self.entities {
            out.push((ElementRef::Entity { entity: e.id }, e.confidence));
            for a in &e.attributes {
                out.push((ElementRef::attribute(e.id, &a.attribute_type), a.confidence));
            }
        }
        for r in &self.relations {
            out.push((ElementRef::relation(r), r.confidence));
        }
        out
    }

    pub fn confidence_of(&self, element: &ElementRef) -> Option<f64> {
        match element {
            ElementRef::Entity { entity } => self.entity(*entity).map(|e| e.confidence),
            ElementRef::Attribute {
                entity,
                attribute_type,
            } => self
                .entity(*entity)
                .and_then(|e| e.attribute(attribute_type))
                .map(|a| a.confidence),
            ElementRef::Relation {
                head,
                tail,
                relation_type,
            } => self
                .relations
                .iter()
                .find(|r| r.head == *head && r.tail == *tail && &r.relation_type == relation_type)
                .map(|r| r.confidence),
        }
    }

    /// Copy of this graph without the given elements. Removing an entity also
    /// drops its attributes and incident relations.
    pub fn without(&self, removed: &BTreeSet<ElementRef>) -> KnowledgeGraph {
        let gone: HashSet<EntityId> = removed
            .iter()
            .filter_map(|r| match r {
                ElementRef::Entity { entity } => Some(*entity),
                _ => None,
            })
            .collect();
        let entities = self
            .entities
            .iter()
            .filter(|e| !gone.contains(&e.id))
            .map(|e| {
                let mut e = e.clone();
                e.attributes
                    .retain(|a| !removed.contains(&ElementRef::attribute(e.id, &a.attribute_type)));
                e
            })
            .collect();
        let relations = self
            .relations
            .iter()
            .filter(|r| {
                !gone.contains(&r.head)
                    && !gone.contains(&r.tail)
                    && !removed.contains(&ElementRef::relation(r))
            })
            .cloned()
            .collect();
        KnowledgeGraph::from_parts(
            self.tokens.clone(),
            self.lemmas.clone(),
            entities,
            relations,
            self.provenance.clone(),
        )
        .expect("removing elements preserves validity")
    }

    /// Copy of this graph with the sense lists of the given entities replaced.
    pub fn with_senses(
        &self,
        senses: &BTreeMap<EntityId, Vec<SenseScore>>,
    ) -> Result<KnowledgeGraph, GraphError> {
        let entities = self
            .entities
            .iter()
            .map(|e| {
                let mut e = e.clone();
                if let Some(s) = senses.get(&e.id) {
                    e.senses = s.clone();
                }
                e
            })
            .collect();
        KnowledgeGraph::from_parts(
            self.tokens.clone(),
            self.lemmas.clone(),
            entities,
            self.relations.clone(),
            self.provenance.clone(),
        )
    }
}

/// A node of a corpus graph: entity `entity` of sentence graph `graph`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub graph: usize,
    pub entity: EntityId,
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}:{}", self.graph, self.entity)
    }
}

/// Disjoint union of sentence graphs plus undirected lemma links.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusGraph {
    graphs: Vec<KnowledgeGraph>,
    lemma_links: BTreeSet<(NodeRef, NodeRef)>,
}

impl CorpusGraph {
    pub fn graphs(&self) -> &[KnowledgeGraph] {
        &self.graphs
    }

    /// Lemma links, each stored once with the smaller endpoint first.
    pub fn lemma_links(&self) -> &BTreeSet<(NodeRef, NodeRef)> {
        &self.lemma_links
    }

    pub fn node_count(&self) -> usize {
        self.graphs.iter().map(KnowledgeGraph::node_count).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.graphs.iter().map(KnowledgeGraph::edge_count).sum()
    }

    pub fn entity(&self, node: NodeRef) -> Option<&Entity> {
        self.graphs
            .get(node.graph)
            .and_then(|g| g.entity(node.entity))
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.graphs.iter().enumerate().flat_map(|(gi, g)| {
            g.entities().iter().map(move |e| NodeRef {
                graph: gi,
                entity: e.id,
            })
        })
    }
}

/// Assembles sentence graphs into one corpus graph.
///
/// With `lemma_link`, every pair of nodes from different graphs that share a
/// lemma is joined by an undirected pseudo-edge.
pub fn merge_corpus(
    graphs: Vec<KnowledgeGraph>,
    lemma_link: bool,
) -> Result<CorpusGraph, GraphError> {
    let mut seen = HashSet::new();
    for g in &graphs {
        if !seen.insert(g.provenance()) {
            return Err(GraphError::DuplicateProvenance(g.provenance().to_string()));
        }
    }
    let mut lemma_links = BTreeSet::new();
    if lemma_link {
        let mut by_lemma: BTreeMap<&str, Vec<NodeRef>> = BTreeMap::new();
        for (gi, g) in graphs.iter().enumerate() {
            for e in g.entities() {
                for lemma in g.entity_lemmas(e.id) {
                    by_lemma.entry(lemma).or_default().push(NodeRef {
                        graph: gi,
                        entity: e.id,
                    });
                }
            }
        }
        for nodes in by_lemma.values() {
            for (i, a) in nodes.iter().enumerate() {
                for b in &nodes[i + 1..] {
                    if a.graph != b.graph {
                        lemma_links.insert((*a.min(b), *a.max(b)));
                    }
                }
            }
        }
    }
    Ok(CorpusGraph {
        graphs,
        lemma_links,
    })
}
