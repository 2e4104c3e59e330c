//! Span-based joint extraction of causal knowledge graphs, schema
//! rectification, sense linking and graph reasoning.

pub mod dataset;
pub mod dot;
pub mod encoder;
pub mod evaluation;
pub mod graph;
pub mod model;
pub mod nn;
pub mod reasoning;
pub mod rectifier;
pub mod schema;
pub mod senses;
pub mod training;

pub use dataset::{load_dataset, parse_dataset, Example};
pub use dot::emit_dot;
pub use encoder::{
    encode_tokens, Encoder, EncoderConfig, EncoderKind, TokenEncoder, TokenEncoding,
};
pub use evaluation::{score, score_with_schema, EvalError, ScoreReport};
pub use graph::{
    assemble_graph, merge_corpus, Attribute, CorpusGraph, ElementRef, Entity, EntityId, GraphError,
    KnowledgeGraph, NodeRef, Relation, Span,
};
pub use model::{extract, Model, ModelError, ModelOptions};
pub use reasoning::{
    compute_valence, find_paths, Holder, NodePattern, Query, QueryResult, Sign, ValenceAssertion,
};
pub use rectifier::{rectify, RemovalLog, RemovalRecord};
pub use schema::{check_constraints, load_schema, Schema, SchemaError, Violation, ViolationKind};
pub use senses::{lca_similarity, link_senses, node_vector, SenseError, SenseInventory};
pub use training::{
    grad_check, joint_loss, train, train_with_history, LossBreakdown, TrainConfig, TrainError,
};
