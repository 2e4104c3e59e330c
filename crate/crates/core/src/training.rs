//! Joint loss, negative sampling, gradients and the training loop.
//!
//! The objective for one example is `L = L_e + L_r + L_a`:
//!
//! * `L_e` is the mean categorical cross-entropy over gold spans and sampled
//!   non-gold spans (labelled null);
//! * `L_r` is the mean binary cross-entropy over every relation type for gold
//!   entity pairs carrying a relation and sampled gold pairs that carry none;
//! * `L_a` is the mean binary cross-entropy over every attribute type for the
//!   gold entity spans.
//!
//! Attribute and relation heads only ever see gold entities during training.
//! Probabilities are clamped to `[1e-12, 1 - 1e-12]` before taking logs; the
//! gradient of a clamped term is zero. Gradients are computed by hand and can
//! be compared against central finite differences with [`grad_check`].

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Example};
use crate::encoder::{Encoder, EncoderConfig, EncoderError, TokenEncoder, TokenEncoding};
use crate::graph::Span;
use crate::model::{
    between_maxpool, entity_rep, enumerate_spans, relation_rep, Model, ModelError, ModelOptions,
    PooledSpan,
};
use crate::nn::{dot, Linear, Matrix};
use crate::schema::{Schema, SchemaError};

pub const PROB_CLAMP: f64 = 1e-12;

/// Denominator floor for [`grad_check`]: differences between gradients smaller
/// than this are measured absolutely, below the resolution of the finite
/// difference.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("schema mismatch in example {example}: {source}")]
    SchemaMismatch {
        example: String,
        #[source]
        source: SchemaError,
    },
    #[error(transparent)]
    InvalidExample(DatasetError),
    #[error("example {example}: span {span} is longer than max_span_len {max}")]
    SpanTooLong {
        example: String,
        span: Span,
        max: usize,
    },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("predictions do not align with targets: {0}")]
    Alignment(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

impl From<DatasetError> for TrainError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Schema { example, source } => {
                TrainError::SchemaMismatch { example, source }
            }
            other => TrainError::InvalidExample(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negative_entities: usize,
    pub negative_relations: usize,
    pub seed: u64,
    pub max_span_len: usize,
    pub width_dim: usize,
    pub relation_threshold: f64,
    pub attribute_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 1,
            negative_entities: 100,
            negative_relations: 50,
            seed: 0,
            max_span_len: 10,
            width_dim: 8,
            relation_threshold: 0.4,
            attribute_threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            max_span_len: self.max_span_len,
            width_dim: self.width_dim,
            relation_threshold: self.relation_threshold,
            attribute_threshold: self.attribute_threshold,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_span_len == 0 {
            return bad("max_span_len must be at least 1");
        }
        for t in [self.relation_threshold, self.attribute_threshold] {
            if !(t > 0.0 && t < 1.0) {
                return bad("thresholds must lie strictly between 0 and 1");
            }
        }
        Ok(())
    }
}

/// Loss components; `total` is always the plain sum of the other three.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub entity: f64,
    pub relation: f64,
    pub attribute: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(entity: f64, relation: f64, attribute: f64) -> Self {
        Self {
            entity,
            relation,
            attribute,
            total: entity + relation + attribute,
        }
    }
}

/// Sampled negatives for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Negatives {
    /// Non-gold spans, sorted.
    pub spans: Vec<Span>,
    /// Ordered gold entity index pairs without any gold relation, sorted.
    pub pairs: Vec<(usize, usize)>,
}

/// Draws non-gold spans and relation-free gold entity pairs uniformly
/// without replacement, deterministically for a given `seed`.
pub fn sample_negatives(example: &Example, config: &TrainConfig, seed: u64) -> Negatives {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gold: HashSet<Span> = (0..example.entities.len())
        .map(|i| example.span(i))
        .collect();
    let candidates: Vec<Span> = enumerate_spans(example.tokens.len(), config.max_span_len)
        .into_iter()
        .filter(|s| !gold.contains(s))
        .collect();
    let mut spans: Vec<Span> = candidates
        .choose_multiple(&mut rng, config.negative_entities.min(candidates.len()))
        .copied()
        .collect();
    spans.sort();

    let related: HashSet<(usize, usize)> =
        example.relations.iter().map(|r| (r.head, r.tail)).collect();
    let n = example.entities.len();
    let free: Vec<(usize, usize)> = (0..n)
        .flat_map(|h| (0..n).map(move |t| (h, t)))
        .filter(|&(h, t)| h != t && !related.contains(&(h, t)))
        .collect();
    let mut pairs: Vec<(usize, usize)> = free
        .choose_multiple(&mut rng, config.negative_relations.min(free.len()))
        .copied()
        .collect();
    pairs.sort();
    Negatives { spans, pairs }
}

/// Supervision for one example, aligned with [`Predictions`].
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// Span and entity class index (0 = null).
    pub entity_spans: Vec<(Span, usize)>,
    pub attribute_spans: Vec<Span>,
    pub attribute_targets: Vec<Vec<f64>>,
    pub relation_pairs: Vec<(Span, Span)>,
    pub relation_targets: Vec<Vec<f64>>,
}

pub fn build_targets(model: &Model, example: &Example, negatives: &Negatives) -> Targets {
    let entity_labels = model.entity_labels();
    let attribute_labels = model.attribute_labels();
    let relation_labels = model.relation_labels();
    let class_of = |t: &str| {
        entity_labels
            .iter()
            .position(|&l| l == t)
            .expect("validated type")
    };

    let mut entity_spans: Vec<(Span, usize)> = example
        .entities
        .iter()
        .enumerate()
        .map(|(i, e)| (example.span(i), class_of(&e.entity_type)))
        .collect();
    entity_spans.extend(negatives.spans.iter().map(|&s| (s, 0)));

    let attribute_spans: Vec<Span> = (0..example.entities.len())
        .map(|i| example.span(i))
        .collect();
    let mut attribute_targets = vec![vec![0.0; attribute_labels.len()]; example.entities.len()];
    for a in &example.attributes {
        let k = attribute_labels
            .iter()
            .position(|&l| l == a.attribute_type)
            .expect("validated type");
        attribute_targets[a.entity][k] = 1.0;
    }

    let mut by_pair: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in &example.relations {
        let k = relation_labels
            .iter()
            .position(|&l| l == r.relation_type)
            .expect("validated type");
        by_pair
            .entry((r.head, r.tail))
            .or_insert_with(|| vec![0.0; relation_labels.len()])[k] = 1.0;
    }
    for &p in &negatives.pairs {
        by_pair
            .entry(p)
            .or_insert_with(|| vec![0.0; relation_labels.len()]);
    }
    let (relation_pairs, relation_targets) = by_pair
        .into_iter()
        .map(|((h, t), y)| ((example.span(h), example.span(t)), y))
        .unzip();

    Targets {
        entity_spans,
        attribute_spans,
        attribute_targets,
        relation_pairs,
        relation_targets,
    }
}

/// Head outputs aligned with [`Targets`].
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub entity: Vec<Vec<f64>>,
    pub attributes: Vec<Vec<f64>>,
    pub relations: Vec<Vec<f64>>,
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn in_clamp_range(p: f64) -> bool {
    (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)
}

fn bce(p: f64, y: f64) -> f64 {
    let c = clamp(p);
    -(y * c.ln() + (1.0 - y) * (1.0 - c).ln())
}

fn mean_bce(rows: &[Vec<f64>], targets: &[Vec<f64>], what: &str) -> Result<f64, TrainError> {
    if rows.len() != targets.len() {
        return Err(TrainError::Alignment(format!(
            "{} {what} predictions for {} targets",
            rows.len(),
            targets.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, y) in rows.iter().zip(targets) {
        if p.len() != y.len() {
            return Err(TrainError::Alignment(format!(
                "{what} row has {} scores for {} labels",
                p.len(),
                y.len()
            )));
        }
        sum += p.iter().zip(y).map(|(&p, &y)| bce(p, y)).sum::<f64>();
        count += p.len();
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

pub fn joint_loss(
    predictions: &Predictions,
    targets: &Targets,
) -> Result<LossBreakdown, TrainError> {
    if predictions.entity.len() != targets.entity_spans.len() {
        return Err(TrainError::Alignment(format!(
            "{} entity distributions for {} spans",
            predictions.entity.len(),
            targets.entity_spans.len()
        )));
    }
    let mut entity = 0.0;
    for (dist, &(_, y)) in predictions.entity.iter().zip(&targets.entity_spans) {
        let p = dist.get(y).ok_or_else(|| {
            TrainError::Alignment(format!(
                "class {y} outside a {}-way distribution",
                dist.len()
            ))
        })?;
        entity -= clamp(*p).ln();
    }
    if !predictions.entity.is_empty() {
        entity /= predictions.entity.len() as f64;
    }
    let attribute = mean_bce(
        &predictions.attributes,
        &targets.attribute_targets,
        "attribute",
    )?;
    let relation = mean_bce(
        &predictions.relations,
        &targets.relation_targets,
        "relation",
    )?;
    Ok(LossBreakdown::new(entity, relation, attribute))
}

/// Trainable parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    AttentionW,
    AttentionB,
    WidthEmbeddings,
    EntityWeight,
    EntityBias,
    AttributeWeight,
    AttributeBias,
    RelationWeight,
    RelationBias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 9] = [
        ParamGroup::AttentionW,
        ParamGroup::AttentionB,
        ParamGroup::WidthEmbeddings,
        ParamGroup::EntityWeight,
        ParamGroup::EntityBias,
        ParamGroup::AttributeWeight,
        ParamGroup::AttributeBias,
        ParamGroup::RelationWeight,
        ParamGroup::RelationBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::AttentionW => "attention.w",
            ParamGroup::AttentionB => "attention.b",
            ParamGroup::WidthEmbeddings => "width_embeddings",
            ParamGroup::EntityWeight => "entity_head.weight",
            ParamGroup::EntityBias => "entity_head.bias",
            ParamGroup::AttributeWeight => "attribute_head.weight",
            ParamGroup::AttributeBias => "attribute_head.bias",
            ParamGroup::RelationWeight => "relation_head.weight",
            ParamGroup::RelationBias => "relation_head.bias",
        }
    }

    pub fn slice(self, model: &Model) -> &[f64] {
        match self {
            ParamGroup::AttentionW => &model.attention.w,
            ParamGroup::AttentionB => std::slice::from_ref(&model.attention.b),
            ParamGroup::WidthEmbeddings => &model.width_embeddings.data,
            ParamGroup::EntityWeight => &model.entity_head.weight.data,
            ParamGroup::EntityBias => &model.entity_head.bias,
            ParamGroup::AttributeWeight => &model.attribute_head.weight.data,
            ParamGroup::AttributeBias => &model.attribute_head.bias,
            ParamGroup::RelationWeight => &model.relation_head.weight.data,
            ParamGroup::RelationBias => &model.relation_head.bias,
        }
    }

    pub fn slice_mut(self, model: &mut Model) -> &mut [f64] {
        match self {
            ParamGroup::AttentionW => &mut model.attention.w,
            ParamGroup::AttentionB => std::slice::from_mut(&mut model.attention.b),
            ParamGroup::WidthEmbeddings => &mut model.width_embeddings.data,
            ParamGroup::EntityWeight => &mut model.entity_head.weight.data,
            ParamGroup::EntityBias => &mut model.entity_head.bias,
            ParamGroup::AttributeWeight => &mut model.attribute_head.weight.data,
            ParamGroup::AttributeBias => &mut model.attribute_head.bias,
            ParamGroup::RelationWeight => &mut model.relation_head.weight.data,
            ParamGroup::RelationBias => &mut model.relation_head.bias,
        }
    }

    pub fn grad(self, g: &Gradients) -> &[f64] {
        match self {
            ParamGroup::AttentionW => &g.attention_w,
            ParamGroup::AttentionB => std::slice::from_ref(&g.attention_b),
            ParamGroup::WidthEmbeddings => &g.width_embeddings.data,
            ParamGroup::EntityWeight => &g.entity_head.weight.data,
            ParamGroup::EntityBias => &g.entity_head.bias,
            ParamGroup::AttributeWeight => &g.attribute_head.weight.data,
            ParamGroup::AttributeBias => &g.attribute_head.bias,
            ParamGroup::RelationWeight => &g.relation_head.weight.data,
            ParamGroup::RelationBias => &g.relation_head.bias,
        }
    }
}

/// Gradient of the loss with respect to every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub attention_w: Vec<f64>,
    pub attention_b: f64,
    pub width_embeddings: Matrix,
    pub entity_head: Linear,
    pub attribute_head: Linear,
    pub relation_head: Linear,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        let zeros = |l: &Linear| Linear::zeros(l.outputs(), l.inputs());
        Self {
            attention_w: vec![0.0; model.attention.w.len()],
            attention_b: 0.0,
            width_embeddings: Matrix::zeros(
                model.width_embeddings.rows,
                model.width_embeddings.cols,
            ),
            entity_head: zeros(&model.entity_head),
            attribute_head: zeros(&model.attribute_head),
            relation_head: zeros(&model.relation_head),
        }
    }

    fn check_finite(&self) -> Result<(), TrainError> {
        for group in ParamGroup::ALL {
            if group.grad(self).iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteGradient(group.name()));
            }
        }
        Ok(())
    }
}

/// Plain gradient descent step.
fn apply(model: &mut Model, grad: &Gradients, step: f64) {
    for group in ParamGroup::ALL {
        let g = group.grad(grad).to_vec();
        for (p, g) in group.slice_mut(model).iter_mut().zip(g) {
            *p -= step * g;
        }
    }
}

fn add_scaled(acc: &mut Gradients, other: &Gradients, scale: f64) {
    fn axpy(a: &mut [f64], b: &[f64], s: f64) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
    }
    axpy(&mut acc.attention_w, &other.attention_w, scale);
    acc.attention_b += scale * other.attention_b;
    axpy(
        &mut acc.width_embeddings.data,
        &other.width_embeddings.data,
        scale,
    );
    for (a, b) in [
        (&mut acc.entity_head, &other.entity_head),
        (&mut acc.attribute_head, &other.attribute_head),
        (&mut acc.relation_head, &other.relation_head),
    ] {
        axpy(&mut a.weight.data, &b.weight.data, scale);
        axpy(&mut a.bias, &b.bias, scale);
    }
}

struct Forward {
    pooled: BTreeMap<Span, PooledSpan>,
    entity_reps: Vec<Vec<f64>>,
    attribute_reps: Vec<Vec<f64>>,
    relation_reps: Vec<Vec<f64>>,
    predictions: Predictions,
}

fn forward(model: &Model, encoding: &TokenEncoding, targets: &Targets) -> Forward {
    let mut pooled = BTreeMap::new();
    let needed = targets
        .entity_spans
        .iter()
        .map(|(s, _)| *s)
        .chain(targets.attribute_spans.iter().copied())
        .chain(targets.relation_pairs.iter().flat_map(|&(h, t)| [h, t]));
    for s in needed {
        pooled
            .entry(s)
            .or_insert_with(|| model.pool(&encoding.tokens, s));
    }
    let rep = |s: &Span| {
        entity_rep(
            *s,
            &pooled[s].vector,
            &encoding.passage,
            &model.width_embeddings,
        )
    };
    let entity_reps: Vec<Vec<f64>> = targets.entity_spans.iter().map(|(s, _)| rep(s)).collect();
    let attribute_reps: Vec<Vec<f64>> = targets.attribute_spans.iter().map(rep).collect();
    let relation_reps: Vec<Vec<f64>> = targets
        .relation_pairs
        .iter()
        .map(|&(h, t)| {
            let ctx = between_maxpool(&encoding.tokens, h, t, model.dimension());
            relation_rep(
                (&pooled[&h].vector, h),
                (&pooled[&t].vector, t),
                &ctx,
                &model.width_embeddings,
            )
        })
        .collect();
    let predictions = Predictions {
        entity: model.classify_entities(&entity_reps),
        attributes: model.classify_attributes(&attribute_reps),
        relations: model.classify_relations(&relation_reps),
    };
    Forward {
        pooled,
        entity_reps,
        attribute_reps,
        relation_reps,
        predictions,
    }
}

fn accumulate(into: &mut BTreeMap<Span, Vec<f64>>, span: Span, g: &[f64]) {
    let slot = into.entry(span).or_insert_with(|| vec![0.0; g.len()]);
    slot.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

fn add_row(m: &mut Matrix, row: usize, g: &[f64]) {
    m.row_mut(row).iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

/// Sigmoid/BCE logit gradients scaled by `scale`; clamped terms contribute nothing.
fn bce_logit_grad(p: &[f64], y: &[f64], scale: f64) -> Vec<f64> {
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            if in_clamp_range(p) {
                (p - y) * scale
            } else {
                0.0
            }
        })
        .collect()
}

/// Loss of one example and, when `grad` is given, its gradient added into it.
pub fn loss_and_gradient(
    model: &Model,
    encoding: &TokenEncoding,
    targets: &Targets,
    grad: Option<&mut Gradients>,
) -> Result<LossBreakdown, TrainError> {
    let fwd = forward(model, encoding, targets);
    let loss = joint_loss(&fwd.predictions, targets)?;
    let Some(g) = grad else { return Ok(loss) };

    let d = model.dimension();
    let dw = model.width_dim();
    let mut dpool: BTreeMap<Span, Vec<f64>> = BTreeMap::new();

    let ne = targets.entity_spans.len().max(1) as f64;
    for ((&(span, y), p), x) in targets
        .entity_spans
        .iter()
        .zip(&fwd.predictions.entity)
        .zip(&fwd.entity_reps)
    {
        if !in_clamp_range(p[y]) {
            continue;
        }
        let mut dz: Vec<f64> = p.iter().map(|v| v / ne).collect();
        dz[y] -= 1.0 / ne;
        let dx = model.entity_head.backward(x, &dz, &mut g.entity_head);
        accumulate(&mut dpool, span, &dx[..d]);
        add_row(&mut g.width_embeddings, span.len() - 1, &dx[2 * d..]);
    }

    let na = (targets.attribute_spans.len() * model.attribute_head.outputs()).max(1) as f64;
    for ((&span, (p, y)), x) in targets
        .attribute_spans
        .iter()
        .zip(
            fwd.predictions
                .attributes
                .iter()
                .zip(&targets.attribute_targets),
        )
        .zip(&fwd.attribute_reps)
    {
        let dz = bce_logit_grad(p, y, 1.0 / na);
        let dx = model.attribute_head.backward(x, &dz, &mut g.attribute_head);
        accumulate(&mut dpool, span, &dx[..d]);
        add_row(&mut g.width_embeddings, span.len() - 1, &dx[2 * d..]);
    }

    let nr = (targets.relation_pairs.len() * model.relation_head.outputs()).max(1) as f64;
    for ((&(head, tail), (p, y)), x) in targets
        .relation_pairs
        .iter()
        .zip(
            fwd.predictions
                .relations
                .iter()
                .zip(&targets.relation_targets),
        )
        .zip(&fwd.relation_reps)
    {
        let dz = bce_logit_grad(p, y, 1.0 / nr);
        let dx = model.relation_head.backward(x, &dz, &mut g.relation_head);
        // [head d | width dw | context d | tail d | width dw]
        accumulate(&mut dpool, head, &dx[..d]);
        add_row(&mut g.width_embeddings, head.len() - 1, &dx[d..d + dw]);
        accumulate(&mut dpool, tail, &dx[2 * d + dw..3 * d + dw]);
        add_row(&mut g.width_embeddings, tail.len() - 1, &dx[3 * d + dw..]);
    }

    for (span, gv) in &dpool {
        let pooled = &fwd.pooled[span];
        let hs = &encoding.tokens[span.indices()];
        let da: Vec<f64> = hs.iter().map(|h| dot(gv, h)).collect();
        let mean: f64 = pooled.weights.iter().zip(&da).map(|(a, x)| a * x).sum();
        for ((h, &a), &dat) in hs.iter().zip(&pooled.weights).zip(&da) {
            let ds = a * (dat - mean);
            g.attention_b += ds;
            g.attention_w
                .iter_mut()
                .zip(h)
                .for_each(|(gw, x)| *gw += ds * x);
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub group: ParamGroup,
    pub parameters: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_relative_error)
            .fold(0.0, f64::max)
    }
}

/// Relative error of an analytic against a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares analytic gradients of the total loss against central finite
/// differences for every parameter of every group. Negatives are sampled
/// once with `config.seed` so both sides see the same objective.
pub fn grad_check(
    model: &Model,
    example: &Example,
    config: &TrainConfig,
    epsilon: f64,
) -> Result<GradCheckReport, TrainError> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(TrainError::InvalidConfig(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    example.validate(0, &model.schema)?;
    let encoding = model.build_encoder()?.encode(&example.tokens)?;
    let negatives = sample_negatives(example, config, config.seed);
    let targets = build_targets(model, example, &negatives);

    let mut analytic = Gradients::zeros_like(model);
    loss_and_gradient(model, &encoding, &targets, Some(&mut analytic))?;
    analytic.check_finite()?;

    let mut probe = model.clone();
    let mut groups = Vec::with_capacity(ParamGroup::ALL.len());
    for group in ParamGroup::ALL {
        let count = group.slice(model).len();
        let mut worst_rel = 0.0f64;
        let mut worst_abs = 0.0f64;
        for i in 0..count {
            let original = group.slice(model)[i];
            group.slice_mut(&mut probe)[i] = original + epsilon;
            let up = loss_and_gradient(&probe, &encoding, &targets, None)?.total;
            group.slice_mut(&mut probe)[i] = original - epsilon;
            let down = loss_and_gradient(&probe, &encoding, &targets, None)?.total;
            group.slice_mut(&mut probe)[i] = original;
            let numeric = (up - down) / (2.0 * epsilon);
            if !numeric.is_finite() {
                return Err(TrainError::NonFiniteGradient(group.name()));
            }
            let a = group.grad(&analytic)[i];
            worst_rel = worst_rel.max(relative_error(a, numeric));
            worst_abs = worst_abs.max((a - numeric).abs());
        }
        groups.push(GroupCheck {
            group,
            parameters: count,
            max_relative_error: worst_rel,
            max_abs_error: worst_abs,
        });
    }
    Ok(GradCheckReport { groups })
}

fn validate_dataset(
    dataset: &[Example],
    schema: &Schema,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (i, ex) in dataset.iter().enumerate() {
        ex.validate(i, schema)?;
        for k in 0..ex.entities.len() {
            let span = ex.span(k);
            if span.len() > config.max_span_len {
                return Err(TrainError::SpanTooLong {
                    example: ex.provenance(i),
                    span,
                    max: config.max_span_len,
                });
            }
        }
    }
    Ok(())
}

/// Mean per-example loss of `model` on `dataset`, using negatives drawn with `seed`.
pub fn dataset_loss(
    model: &Model,
    encoder: &Encoder,
    dataset: &[Example],
    config: &TrainConfig,
    seed: u64,
) -> Result<LossBreakdown, TrainError> {
    let mut sum = LossBreakdown::default();
    for (i, ex) in dataset.iter().enumerate() {
        let enc = encoder.encode(&ex.tokens)?;
        let targets = build_targets(
            model,
            ex,
            &sample_negatives(ex, config, seed.wrapping_add(i as u64)),
        );
        let l = loss_and_gradient(model, &enc, &targets, None)?;
        sum = LossBreakdown::new(
            sum.entity + l.entity,
            sum.relation + l.relation,
            sum.attribute + l.attribute,
        );
    }
    let n = dataset.len() as f64;
    Ok(LossBreakdown::new(
        sum.entity / n,
        sum.relation / n,
        sum.attribute / n,
    ))
}

/// Trains a fresh model and returns it with the mean loss of every epoch.
///
/// Each epoch shuffles the examples, draws fresh negatives and takes one
/// gradient-descent step per mini-batch on the batch-averaged gradient.
/// Encoder parameters are not trained.
pub fn train_with_history(
    dataset: &[Example],
    schema: &Schema,
    encoder: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(Model, Vec<LossBreakdown>), TrainError> {
    config.validate()?;
    validate_dataset(dataset, schema, config)?;
    let mut model = Model::new(
        schema.clone(),
        encoder.clone(),
        config.model_options(),
        config.seed,
    );
    model.validate()?;
    let enc = model.build_encoder()?;
    let encodings = dataset
        .iter()
        .map(|ex| enc.encode(&ex.tokens))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch = [0.0f64; 3];
        for batch in order.chunks(config.batch_size) {
            let mut grad = Gradients::zeros_like(&model);
            for &i in batch {
                let negatives = sample_negatives(&dataset[i], config, rng.gen());
                let targets = build_targets(&model, &dataset[i], &negatives);
                let mut g = Gradients::zeros_like(&model);
                let loss = loss_and_gradient(&model, &encodings[i], &targets, Some(&mut g))?;
                add_scaled(&mut grad, &g, 1.0 / batch.len() as f64);
                epoch[0] += loss.entity;
                epoch[1] += loss.relation;
                epoch[2] += loss.attribute;
            }
            grad.check_finite()?;
            apply(&mut model, &grad, config.learning_rate);
        }
        let n = dataset.len() as f64;
        history.push(LossBreakdown::new(epoch[0] / n, epoch[1] / n, epoch[2] / n));
    }
    Ok((model, history))
}

pub fn train(
    dataset: &[Example],
    schema: &Schema,
    encoder: &EncoderConfig,
    config: &TrainConfig,
) -> Result<Model, TrainError> {
    train_with_history(dataset, schema, encoder, config).map(|(m, _)| m)
}
