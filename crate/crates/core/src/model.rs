//! Span-classification extraction model.
//!
//! Every span up to `max_span_len` tokens is pooled with learned attention
//! over its token vectors and concatenated with the passage vector and a
//! width embedding. A softmax head labels spans with an entity type or null;
//! a sigmoid head scores attributes on identified entities; a sigmoid head
//! scores relation types on ordered entity pairs, using both span vectors,
//! both width embeddings and a maxpool over the tokens between them.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Encoder, EncoderConfig, EncoderError, TokenEncoder, TokenEncoding};
use crate::graph::{
    assemble_graph, AttributeInput, EntityInput, GraphError, KnowledgeGraph, RelationInput, Span,
};
use crate::nn::{argmax, dot, sigmoid, softmax, Linear, Matrix};
use crate::schema::Schema;

pub const NULL_LABEL: &str = "null";
pub const MODEL_FORMAT: &str = "causalkg-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("inconsistent model dimensions: {0}")]
    Dimension(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error("cannot access model file: {0}")]
    Io(#[from] std::io::Error),
}

/// All spans of 1..=`max_len` tokens over `n` tokens, ordered by start then length.
pub fn enumerate_spans(n: usize, max_len: usize) -> Vec<Span> {
    (0..n)
        .flat_map(|start| {
            (1..=max_len.min(n - start)).map(move |len| Span::new(start, start + len))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledSpan {
    /// Attention weight of each token in the span.
    pub weights: Vec<f64>,
    pub vector: Vec<f64>,
}

/// Attention pooling: `a_t = softmax_t(w . h_t + b)`, `v = sum_t a_t h_t`.
pub fn span_attention(token_vectors: &[Vec<f64>], span: Span, w: &[f64], b: f64) -> PooledSpan {
    let hs = &token_vectors[span.indices()];
    let scores: Vec<f64> = hs.iter().map(|h| dot(w, h) + b).collect();
    let weights = softmax(&scores);
    let mut vector = vec![0.0; w.len()];
    for (a, h) in weights.iter().zip(hs) {
        for (v, x) in vector.iter_mut().zip(h) {
            *v += a * x;
        }
    }
    PooledSpan { weights, vector }
}

/// Entity representation `[pooled ; passage ; width(len)]`.
pub fn entity_rep(
    span: Span,
    pooled: &[f64],
    passage: &[f64],
    width_embeddings: &Matrix,
) -> Vec<f64> {
    let mut x = Vec::with_capacity(pooled.len() + passage.len() + width_embeddings.cols);
    x.extend_from_slice(pooled);
    x.extend_from_slice(passage);
    x.extend_from_slice(width_embeddings.row(span.len() - 1));
    x
}

/// Token range strictly between two spans; empty when they touch or overlap.
pub fn between(a: Span, b: Span) -> std::ops::Range<usize> {
    let lo = a.end.min(b.end);
    let hi = a.start.max(b.start);
    lo..hi.max(lo)
}

/// Elementwise max over the tokens between two spans, or zeros if there are none.
pub fn between_maxpool(token_vectors: &[Vec<f64>], a: Span, b: Span, dimension: usize) -> Vec<f64> {
    let range = between(a, b);
    if range.is_empty() {
        return vec![0.0; dimension];
    }
    let mut out = vec![f64::NEG_INFINITY; dimension];
    for h in &token_vectors[range] {
        for (o, &x) in out.iter_mut().zip(h) {
            *o = o.max(x);
        }
    }
    out
}

/// Relation pair representation `[head ; width(head) ; between ; tail ; width(tail)]`.
pub fn relation_rep(
    head: (&[f64], Span),
    tail: (&[f64], Span),
    context: &[f64],
    width_embeddings: &Matrix,
) -> Vec<f64> {
    let mut x = Vec::with_capacity(head.0.len() * 3 + width_embeddings.cols * 2);
    x.extend_from_slice(head.0);
    x.extend_from_slice(width_embeddings.row(head.1.len() - 1));
    x.extend_from_slice(context);
    x.extend_from_slice(tail.0);
    x.extend_from_slice(width_embeddings.row(tail.1.len() - 1));
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub max_span_len: usize,
    pub width_dim: usize,
    pub relation_threshold: f64,
    pub attribute_threshold: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            max_span_len: 10,
            width_dim: 8,
            relation_threshold: 0.4,
            attribute_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanAttention {
    pub w: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub schema: Schema,
    pub encoder: EncoderConfig,
    pub max_span_len: usize,
    pub relation_threshold: f64,
    pub attribute_threshold: f64,
    pub attention: SpanAttention,
    /// Row `l - 1` embeds span length `l`.
    pub width_embeddings: Matrix,
    pub entity_head: Linear,
    pub attribute_head: Linear,
    pub relation_head: Linear,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: Model,
}

/// An identified entity: span index, entity class index (never 0) and confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifiedEntity {
    pub span: usize,
    pub class: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    /// Index into [`SpanScores::entities`].
    pub head: usize,
    pub tail: usize,
    pub scores: Vec<f64>,
}

/// Raw head outputs for one passage, before thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanScores {
    pub spans: Vec<Span>,
    pub entity_distributions: Vec<Vec<f64>>,
    pub entities: Vec<IdentifiedEntity>,
    /// Parallel to `entities`.
    pub attribute_scores: Vec<Vec<f64>>,
    pub relation_scores: Vec<PairScores>,
}

impl Model {
    fn sized(
        schema: &Schema,
        encoder: &EncoderConfig,
        options: ModelOptions,
    ) -> (usize, usize, usize, usize, usize) {
        let d = encoder.dimension;
        let dw = options.width_dim;
        (
            d,
            2 * d + dw,
            3 * d + 2 * dw,
            schema.entity_types().len() + 1,
            schema.attribute_types().len(),
        )
    }

    /// Seeded initialization: zero biases, weights uniform in `+-1/sqrt(fan_in)`.
    pub fn new(schema: Schema, encoder: EncoderConfig, options: ModelOptions, seed: u64) -> Self {
        let (d, rep, pair, classes, attrs) = Self::sized(&schema, &encoder, options);
        let rels = schema.relation_types().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Matrix::uniform(1, d, &mut rng).data;
        let width_embeddings = Matrix::uniform(options.max_span_len, options.width_dim, &mut rng);
        let entity_head = Linear::init(classes, rep, &mut rng);
        let attribute_head = Linear::init(attrs, rep, &mut rng);
        let relation_head = Linear::init(rels, pair, &mut rng);
        Self {
            schema,
            encoder,
            max_span_len: options.max_span_len,
            relation_threshold: options.relation_threshold,
            attribute_threshold: options.attribute_threshold,
            attention: SpanAttention { w, b: 0.0 },
            width_embeddings,
            entity_head,
            attribute_head,
            relation_head,
        }
    }

    /// All parameters zero.
    pub fn zeros(schema: Schema, encoder: EncoderConfig, options: ModelOptions) -> Self {
        let (d, rep, pair, classes, attrs) = Self::sized(&schema, &encoder, options);
        let rels = schema.relation_types().len();
        Self {
            schema,
            encoder,
            max_span_len: options.max_span_len,
            relation_threshold: options.relation_threshold,
            attribute_threshold: options.attribute_threshold,
            attention: SpanAttention {
                w: vec![0.0; d],
                b: 0.0,
            },
            width_embeddings: Matrix::zeros(options.max_span_len, options.width_dim),
            entity_head: Linear::zeros(classes, rep),
            attribute_head: Linear::zeros(attrs, rep),
            relation_head: Linear::zeros(rels, pair),
        }
    }

    pub fn dimension(&self) -> usize {
        self.encoder.dimension
    }

    pub fn width_dim(&self) -> usize {
        self.width_embeddings.cols
    }

    /// Entity classes; index 0 is the null class.
    pub fn entity_labels(&self) -> Vec<&str> {
        std::iter::once(NULL_LABEL)
            .chain(self.schema.entity_types().iter().map(String::as_str))
            .collect()
    }

    pub fn attribute_labels(&self) -> Vec<&str> {
        self.schema
            .attribute_types()
            .iter()
            .map(String::as_str)
            .collect()
    }

    pub fn relation_labels(&self) -> Vec<&str> {
        self.schema
            .relation_types()
            .iter()
            .map(String::as_str)
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.dimension();
        let dw = self.width_dim();
        let bad = |what: &str| Err(ModelError::Dimension(what.to_string()));
        if self.max_span_len < 1 {
            return bad("max_span_len must be at least 1");
        }
        for t in [self.relation_threshold, self.attribute_threshold] {
            if !(t > 0.0 && t < 1.0) {
                return bad("thresholds must lie strictly between 0 and 1");
            }
        }
        if self.attention.w.len() != d || !self.attention.b.is_finite() {
            return bad("attention vector does not match encoder dimension");
        }
        if !self.width_embeddings.is_consistent() || self.width_embeddings.rows != self.max_span_len
        {
            return bad("width embeddings must have one row per span length");
        }
        let rep = 2 * d + dw;
        let heads = [
            (
                "entity",
                &self.entity_head,
                self.schema.entity_types().len() + 1,
                rep,
            ),
            (
                "attribute",
                &self.attribute_head,
                self.schema.attribute_types().len(),
                rep,
            ),
            (
                "relation",
                &self.relation_head,
                self.schema.relation_types().len(),
                3 * d + 2 * dw,
            ),
        ];
        for (name, head, outputs, inputs) in heads {
            if !head.is_consistent() || head.outputs() != outputs || head.inputs() != inputs {
                return Err(ModelError::Dimension(format!(
                    "{name} head is {}x{}, expected {outputs}x{inputs}",
                    head.outputs(),
                    head.inputs()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ModelError::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn build_encoder(&self) -> Result<Encoder, ModelError> {
        Ok(Encoder::from_config(&self.encoder)?)
    }

    pub fn pool(&self, token_vectors: &[Vec<f64>], span: Span) -> PooledSpan {
        span_attention(token_vectors, span, &self.attention.w, self.attention.b)
    }

    /// Softmax distribution over `[null, entity types...]` for each representation.
    pub fn classify_entities(&self, reps: &[Vec<f64>]) -> Vec<Vec<f64>> {
        reps.iter()
            .map(|x| softmax(&self.entity_head.forward(x)))
            .collect()
    }

    /// Independent sigmoid score per attribute type.
    pub fn classify_attributes(&self, reps: &[Vec<f64>]) -> Vec<Vec<f64>> {
        reps.iter()
            .map(|x| {
                self.attribute_head
                    .forward(x)
                    .into_iter()
                    .map(sigmoid)
                    .collect()
            })
            .collect()
    }

    /// Independent sigmoid score per relation type.
    pub fn classify_relations(&self, pair_reps: &[Vec<f64>]) -> Vec<Vec<f64>> {
        pair_reps
            .iter()
            .map(|x| {
                self.relation_head
                    .forward(x)
                    .into_iter()
                    .map(sigmoid)
                    .collect()
            })
            .collect()
    }

    fn check_encoding(&self, encoding: &TokenEncoding, n: usize) -> Result<(), ModelError> {
        if encoding.len() != n || encoding.dimension() != self.dimension() {
            return Err(ModelError::Dimension(format!(
                "encoding has {} vectors of dimension {}, expected {n} of dimension {}",
                encoding.len(),
                encoding.dimension(),
                self.dimension()
            )));
        }
        Ok(())
    }

    /// Runs all three heads over one encoded passage.
    pub fn score(&self, encoding: &TokenEncoding) -> SpanScores {
        let n = encoding.len();
        let spans = enumerate_spans(n, self.max_span_len);
        let pooled: Vec<PooledSpan> = spans
            .iter()
            .map(|&s| self.pool(&encoding.tokens, s))
            .collect();
        let reps: Vec<Vec<f64>> = spans
            .iter()
            .zip(&pooled)
            .map(|(&s, p)| entity_rep(s, &p.vector, &encoding.passage, &self.width_embeddings))
            .collect();
        let entity_distributions = self.classify_entities(&reps);
        let entities: Vec<IdentifiedEntity> = entity_distributions
            .iter()
            .enumerate()
            .filter_map(|(i, dist)| {
                let class = argmax(dist);
                (class != 0).then(|| IdentifiedEntity {
                    span: i,
                    class,
                    confidence: dist[class],
                })
            })
            .collect();
        let entity_reps: Vec<Vec<f64>> = entities.iter().map(|e| reps[e.span].clone()).collect();
        let attribute_scores = self.classify_attributes(&entity_reps);

        let mut pairs = Vec::new();
        let mut pair_reps = Vec::new();
        for (hi, h) in entities.iter().enumerate() {
            for (ti, t) in entities.iter().enumerate() {
                if hi == ti {
                    continue;
                }
                let (hs, ts) = (spans[h.span], spans[t.span]);
                let context = between_maxpool(&encoding.tokens, hs, ts, self.dimension());
                pair_reps.push(relation_rep(
                    (&pooled[h.span].vector, hs),
                    (&pooled[t.span].vector, ts),
                    &context,
                    &self.width_embeddings,
                ));
                pairs.push((hi, ti));
            }
        }
        let relation_scores = pairs
            .into_iter()
            .zip(self.classify_relations(&pair_reps))
            .map(|((head, tail), scores)| PairScores { head, tail, scores })
            .collect();

        SpanScores {
            spans,
            entity_distributions,
            entities,
            attribute_scores,
            relation_scores,
        }
    }

    /// Thresholds raw scores into a graph.
    pub fn decode(
        &self,
        tokens: &[String],
        lemmas: Option<Vec<String>>,
        scores: &SpanScores,
        relation_threshold: f64,
        attribute_threshold: f64,
    ) -> Result<KnowledgeGraph, ModelError> {
        let entity_labels = self.entity_labels();
        let attribute_labels = self.attribute_labels();
        let relation_labels = self.relation_labels();
        let entities: Vec<EntityInput> = scores
            .entities
            .iter()
            .map(|e| EntityInput {
                span: scores.spans[e.span],
                entity_type: entity_labels[e.class].to_string(),
                confidence: e.confidence,
            })
            .collect();
        let mut attributes = Vec::new();
        for (i, row) in scores.attribute_scores.iter().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                if p >= attribute_threshold {
                    attributes.push(AttributeInput {
                        entity: i,
                        attribute_type: attribute_labels[k].to_string(),
                        confidence: p,
                    });
                }
            }
        }
        let mut relations = Vec::new();
        for pair in &scores.relation_scores {
            for (k, &p) in pair.scores.iter().enumerate() {
                if p >= relation_threshold {
                    relations.push(RelationInput {
                        head: pair.head,
                        tail: pair.tail,
                        relation_type: relation_labels[k].to_string(),
                        confidence: p,
                    });
                }
            }
        }
        Ok(assemble_graph(
            tokens.to_vec(),
            lemmas,
            &entities,
            &attributes,
            &relations,
        )?)
    }

    /// Extracts a graph from an already encoded passage.
    pub fn extract_encoded(
        &self,
        tokens: &[String],
        lemmas: Option<Vec<String>>,
        encoding: &TokenEncoding,
    ) -> Result<KnowledgeGraph, ModelError> {
        self.check_encoding(encoding, tokens.len())?;
        let scores = self.score(encoding);
        self.decode(
            tokens,
            lemmas,
            &scores,
            self.relation_threshold,
            self.attribute_threshold,
        )
    }

    pub fn extract_with(
        &self,
        encoder: &impl TokenEncoder,
        tokens: &[String],
        lemmas: Option<Vec<String>>,
    ) -> Result<KnowledgeGraph, ModelError> {
        let encoding = encoder.encode(tokens)?;
        self.extract_encoded(tokens, lemmas, &encoding)
    }
}

/// Encodes `tokens` with the model's encoder and extracts a graph.
pub fn extract(
    tokens: &[String],
    lemmas: Option<Vec<String>>,
    model: &Model,
) -> Result<KnowledgeGraph, ModelError> {
    model.extract_with(&model.build_encoder()?, tokens, lemmas)
}
