//! Valence propagation and start/end pattern path queries.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path as FsPath;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{CorpusGraph, EntityId, GraphError, KnowledgeGraph, NodeRef};
use crate::schema::{Schema, SchemaError};

pub const VALENCE_EDGES: [&str; 7] = [
    "intent+",
    "function+",
    "consequent",
    "object",
    "recipient",
    "q+",
    "q-",
];
pub const DEFAULT_MAX_LEN: usize = 6;

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error("graph does not fit the ethno schema: {0}")]
    SchemaMismatch(#[from] SchemaError),
    #[error("node pattern constrains nothing")]
    EmptyPattern,
    #[error("max_len must be at least 1")]
    InvalidMaxLen,
    #[error("cannot parse query: {0}")]
    Parse(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Whose valence an assertion records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Holder {
    Entity(EntityId),
    Norm,
}

impl fmt::Display for Holder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Holder::Entity(id) => write!(f, "{id}"),
            Holder::Norm => f.write_str("NORM"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum HolderRepr {
    Entity(EntityId),
    Token(String),
}

impl Serialize for Holder {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Holder::Entity(id) => HolderRepr::Entity(*id),
            Holder::Norm => HolderRepr::Token("NORM".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Holder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match HolderRepr::deserialize(d)? {
            HolderRepr::Entity(id) => Ok(Holder::Entity(id)),
            HolderRepr::Token(t) if t == "NORM" => Ok(Holder::Norm),
            HolderRepr::Token(t) => Err(serde::de::Error::custom(format!("unknown holder {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValenceAssertion {
    pub holder: Holder,
    pub target: EntityId,
    pub sign: Sign,
    /// The source node whose traversal produced this assertion.
    pub source: EntityId,
}

/// Valence sources in id order: nodes with an outgoing `intent+` or
/// `function+` edge and nodes carrying `prescribed`.
pub fn valence_sources(graph: &KnowledgeGraph) -> Vec<EntityId> {
    graph
        .entities()
        .iter()
        .filter(|e| {
            e.has_attribute("prescribed")
                || graph
                    .outgoing(e.id)
                    .any(|r| r.relation_type == "intent+" || r.relation_type == "function+")
        })
        .map(|e| e.id)
        .collect()
}

/// Propagates valence forward from every source.
///
/// The holder is each target of the source's `agent` edges, or `NORM` when
/// there is none. Traversal is depth-first over [`VALENCE_EDGES`], starting
/// positive; the sign flips on every `q-` edge and on entering a node marked
/// `negated` (the source included). Each `(node, sign)` state is expanded at
/// most once per source, so cyclic graphs terminate.
pub fn compute_valence(graph: &KnowledgeGraph) -> Result<Vec<ValenceAssertion>, ReasoningError> {
    Schema::ethno().check_types(graph)?;
    let negated = |id: EntityId| graph.entity(id).is_some_and(|e| e.has_attribute("negated"));
    let mut out = Vec::new();
    for source in valence_sources(graph) {
        let mut holders: Vec<Holder> = graph
            .outgoing(source)
            .filter(|r| r.relation_type == "agent")
            .map(|r| Holder::Entity(r.tail))
            .collect();
        holders.sort();
        holders.dedup();
        if holders.is_empty() {
            holders.push(Holder::Norm);
        }

        let start = if negated(source) {
            Sign::Negative
        } else {
            Sign::Positive
        };
        let mut seen = HashSet::new();
        let mut reached = Vec::new();
        let mut stack = vec![(source, start)];
        while let Some((node, sign)) = stack.pop() {
            if !seen.insert((node, sign)) {
                continue;
            }
            reached.push((node, sign));
            let mut next: Vec<(EntityId, Sign)> = graph
                .outgoing(node)
                .filter(|r| VALENCE_EDGES.contains(&r.relation_type.as_str()))
                .map(|r| {
                    let mut s = if r.relation_type == "q-" {
                        sign.flip()
                    } else {
                        sign
                    };
                    if negated(r.tail) {
                        s = s.flip();
                    }
                    (r.tail, s)
                })
                .collect();
            // reversed so the lowest id is expanded first
            next.sort();
            next.dedup();
            stack.extend(next.into_iter().rev());
        }
        for holder in holders {
            out.extend(reached.iter().map(|&(target, sign)| ValenceAssertion {
                holder,
                target,
                sign,
                source,
            }));
        }
    }
    Ok(out)
}

/// Outgoing relation of `relation_type` to a node matching `node`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleConstraint {
    pub relation_type: String,
    pub node: NodePattern,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodePattern {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma_any_of: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_attributes: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_constraints: Option<Vec<RoleConstraint>>,
}

impl NodePattern {
    pub fn lemmas<I: IntoIterator<Item = S>, S: Into<String>>(lemmas: I) -> Self {
        NodePattern {
            lemma_any_of: Some(lemmas.into_iter().map(Into::into).collect()),
            ..NodePattern::default()
        }
    }

    pub fn with_role(mut self, relation_type: &str, node: NodePattern) -> Self {
        self.role_constraints
            .get_or_insert_with(Vec::new)
            .push(RoleConstraint {
                relation_type: relation_type.to_string(),
                node,
            });
        self
    }

    pub fn validate(&self) -> Result<(), ReasoningError> {
        if self.lemma_any_of.is_none()
            && self.entity_type.is_none()
            && self.required_attributes.is_none()
            && self.role_constraints.is_none()
        {
            return Err(ReasoningError::EmptyPattern);
        }
        for c in self.role_constraints.iter().flatten() {
            c.node.validate()?;
        }
        Ok(())
    }

    pub fn matches(&self, graph: &KnowledgeGraph, id: EntityId) -> bool {
        let Some(e) = graph.entity(id) else {
            return false;
        };
        if let Some(any) = &self.lemma_any_of {
            if !graph.entity_lemmas(id).iter().any(|l| any.contains(*l)) {
                return false;
            }
        }
        if let Some(t) = &self.entity_type {
            if &e.entity_type != t {
                return false;
            }
        }
        if let Some(attrs) = &self.required_attributes {
            if !attrs.iter().all(|a| e.has_attribute(a)) {
                return false;
            }
        }
        self.role_constraints.iter().flatten().all(|c| {
            graph
                .outgoing(id)
                .any(|r| r.relation_type == c.relation_type && c.node.matches(graph, r.tail))
        })
    }
}

/// One traversable edge of a corpus graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeRef {
    Relation {
        graph: usize,
        head: EntityId,
        tail: EntityId,
        #[serde(rename = "type")]
        relation_type: String,
    },
    LemmaLink {
        a: NodeRef,
        b: NodeRef,
    },
}

/// A simple path: `nodes[i]` and `nodes[i + 1]` are joined by `edges[i]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryPath {
    pub nodes: Vec<NodeRef>,
    pub edges: Vec<EdgeRef>,
}

/// The union of all paths: touched nodes and relations per sentence graph
/// plus the lemma links used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuerySubgraph {
    pub graphs: BTreeMap<usize, KnowledgeGraph>,
    pub lemma_links: BTreeSet<(NodeRef, NodeRef)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub paths: Vec<QueryPath>,
    pub subgraph: QuerySubgraph,
}

/// Query file contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub start: NodePattern,
    pub end: NodePattern,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

impl Query {
    pub fn parse(text: &str) -> Result<Self, ReasoningError> {
        let q: Query =
            serde_json::from_str(text).map_err(|e| ReasoningError::Parse(e.to_string()))?;
        q.start.validate()?;
        q.end.validate()?;
        if q.max_len == 0 {
            return Err(ReasoningError::InvalidMaxLen);
        }
        Ok(q)
    }

    pub fn load(path: &FsPath) -> Result<Self, ReasoningError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReasoningError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn run(&self, corpus: &CorpusGraph) -> Result<QueryResult, ReasoningError> {
        find_paths(corpus, &self.start, &self.end, self.max_len)
    }
}

/// Neighbours of every node in traversal order: relations forward,
/// `modifier` relations and lemma links in both directions.
pub fn adjacency(corpus: &CorpusGraph) -> BTreeMap<NodeRef, Vec<(NodeRef, EdgeRef)>> {
    let mut adj: BTreeMap<NodeRef, Vec<(NodeRef, EdgeRef)>> =
        corpus.nodes().map(|n| (n, Vec::new())).collect();
    for (gi, g) in corpus.graphs().iter().enumerate() {
        for r in g.relations() {
            let head = NodeRef {
                graph: gi,
                entity: r.head,
            };
            let tail = NodeRef {
                graph: gi,
                entity: r.tail,
            };
            let edge = EdgeRef::Relation {
                graph: gi,
                head: r.head,
                tail: r.tail,
                relation_type: r.relation_type.clone(),
            };
            if r.relation_type == "modifier" {
                adj.get_mut(&tail).expect("node").push((head, edge.clone()));
            }
            adj.get_mut(&head).expect("node").push((tail, edge));
        }
    }
    for &(a, b) in corpus.lemma_links() {
        let edge = EdgeRef::LemmaLink { a, b };
        adj.get_mut(&a).expect("node").push((b, edge.clone()));
        adj.get_mut(&b).expect("node").push((a, edge));
    }
    for list in adj.values_mut() {
        list.sort();
    }
    adj
}

/// Every simple path of 1 to `max_len` edges from a node matching `start`
/// to a node matching `end`, ordered by start node and then depth-first.
/// Paths may pass through other end matches.
pub fn find_paths(
    corpus: &CorpusGraph,
    start: &NodePattern,
    end: &NodePattern,
    max_len: usize,
) -> Result<QueryResult, ReasoningError> {
    if max_len == 0 {
        return Err(ReasoningError::InvalidMaxLen);
    }
    let graphs = corpus.graphs();
    let is = |p: &NodePattern, n: NodeRef| p.matches(&graphs[n.graph], n.entity);
    let adj = adjacency(corpus);
    let mut paths = Vec::new();

    struct Walk<'a> {
        adj: &'a BTreeMap<NodeRef, Vec<(NodeRef, EdgeRef)>>,
        ends: &'a HashSet<NodeRef>,
        max_len: usize,
        nodes: Vec<NodeRef>,
        edges: Vec<EdgeRef>,
        on_path: HashSet<NodeRef>,
        out: &'a mut Vec<QueryPath>,
    }

    impl Walk<'_> {
        fn go(&mut self) {
            let here = *self.nodes.last().expect("nonempty");
            if !self.edges.is_empty() && self.ends.contains(&here) {
                self.out.push(QueryPath {
                    nodes: self.nodes.clone(),
                    edges: self.edges.clone(),
                });
            }
            if self.edges.len() == self.max_len {
                return;
            }
            for (next, edge) in &self.adj[&here] {
                if self.on_path.insert(*next) {
                    self.nodes.push(*next);
                    self.edges.push(edge.clone());
                    self.go();
                    self.edges.pop();
                    self.nodes.pop();
                    self.on_path.remove(next);
                }
            }
        }
    }

    let ends: HashSet<NodeRef> = corpus.nodes().filter(|&n| is(end, n)).collect();
    for s in corpus.nodes().filter(|&n| is(start, n)) {
        let mut walk = Walk {
            adj: &adj,
            ends: &ends,
            max_len,
            nodes: vec![s],
            edges: Vec::new(),
            on_path: HashSet::from([s]),
            out: &mut paths,
        };
        walk.go();
    }
    let subgraph = union_subgraph(corpus, &paths)?;
    Ok(QueryResult { paths, subgraph })
}

fn union_subgraph(
    corpus: &CorpusGraph,
    paths: &[QueryPath],
) -> Result<QuerySubgraph, ReasoningError> {
    let mut nodes: BTreeMap<usize, BTreeSet<EntityId>> = BTreeMap::new();
    let mut relations: BTreeSet<(usize, EntityId, EntityId, &str)> = BTreeSet::new();
    let mut lemma_links = BTreeSet::new();
    for p in paths {
        for n in &p.nodes {
            nodes.entry(n.graph).or_default().insert(n.entity);
        }
        for e in &p.edges {
            match e {
                EdgeRef::Relation {
                    graph,
                    head,
                    tail,
                    relation_type,
                } => {
                    relations.insert((*graph, *head, *tail, relation_type.as_str()));
                }
                EdgeRef::LemmaLink { a, b } => {
                    lemma_links.insert((*a, *b));
                }
            }
        }
    }
    let mut graphs = BTreeMap::new();
    for (gi, keep) in nodes {
        let g = &corpus.graphs()[gi];
        let entities = g
            .entities()
            .iter()
            .filter(|e| keep.contains(&e.id))
            .cloned()
            .collect();
        let rels = g
            .relations()
            .iter()
            .filter(|r| relations.contains(&(gi, r.head, r.tail, r.relation_type.as_str())))
            .cloned()
            .collect();
        let sub = KnowledgeGraph::from_parts(
            g.tokens().to_vec(),
            g.lemmas().to_vec(),
            entities,
            rels,
            g.provenance().to_string(),
        )?;
        graphs.insert(gi, sub);
    }
    Ok(QuerySubgraph {
        graphs,
        lemma_links,
    })
}
