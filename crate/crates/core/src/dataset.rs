//! Annotated training/evaluation examples.
//!
//! A dataset file is a JSON array of examples. Attribute and relation records
//! refer to entities by their position in the example's `entities` array.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    assemble_graph, AttributeInput, EntityInput, GraphError, KnowledgeGraph, RelationInput, Span,
};
use crate::schema::{Schema, SchemaError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse dataset: {0}")]
    Parse(String),
    #[error("example {example}: {source}")]
    Invalid {
        example: String,
        #[source]
        source: GraphError,
    },
    #[error("example {example}: {source}")]
    Schema {
        example: String,
        #[source]
        source: SchemaError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntity {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAttribute {
    pub entity: usize,
    #[serde(rename = "type")]
    pub attribute_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub head: usize,
    pub tail: usize,
    #[serde(rename = "type")]
    pub relation_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<Vec<String>>,
    #[serde(default)]
    pub entities: Vec<GoldEntity>,
    #[serde(default)]
    pub attributes: Vec<GoldAttribute>,
    #[serde(default)]
    pub relations: Vec<GoldRelation>,
}

impl Example {
    /// The example's id, or `ex<index>` when it has none.
    pub fn provenance(&self, index: usize) -> String {
        self.id.clone().unwrap_or_else(|| format!("ex{index}"))
    }

    pub fn span(&self, entity: usize) -> Span {
        let e = &self.entities[entity];
        Span {
            start: e.start,
            end: e.end,
        }
    }

    /// Gold graph with every confidence set to 1.
    pub fn to_graph(&self, index: usize) -> Result<KnowledgeGraph, DatasetError> {
        let invalid = |source| DatasetError::Invalid {
            example: self.provenance(index),
            source,
        };
        let mut entities = Vec::with_capacity(self.entities.len());
        for e in &self.entities {
            if e.start >= e.end {
                return Err(invalid(GraphError::SpanOutOfBounds {
                    span: Span {
                        start: e.start,
                        end: e.end,
                    },
                    tokens: self.tokens.len(),
                }));
            }
            entities.push(EntityInput {
                span: Span::new(e.start, e.end),
                entity_type: e.entity_type.clone(),
                confidence: 1.0,
            });
        }
        let attributes: Vec<_> = self
            .attributes
            .iter()
            .map(|a| AttributeInput {
                entity: a.entity,
                attribute_type: a.attribute_type.clone(),
                confidence: 1.0,
            })
            .collect();
        let relations: Vec<_> = self
            .relations
            .iter()
            .map(|r| RelationInput {
                head: r.head,
                tail: r.tail,
                relation_type: r.relation_type.clone(),
                confidence: 1.0,
            })
            .collect();
        assemble_graph(
            self.tokens.clone(),
            self.lemmas.clone(),
            &entities,
            &attributes,
            &relations,
        )
        .map(|g| g.with_provenance(self.provenance(index)))
        .map_err(invalid)
    }

    /// Structural validation plus a check that every type is declared by `schema`.
    pub fn validate(&self, index: usize, schema: &Schema) -> Result<KnowledgeGraph, DatasetError> {
        let graph = self.to_graph(index)?;
        schema
            .check_types(&graph)
            .map_err(|source| DatasetError::Schema {
                example: self.provenance(index),
                source,
            })?;
        Ok(graph)
    }
}

pub fn parse_dataset(text: &str) -> Result<Vec<Example>, DatasetError> {
    serde_json::from_str(text).map_err(|e| DatasetError::Parse(e.to_string()))
}

pub fn load_dataset(path: &Path) -> Result<Vec<Example>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}
