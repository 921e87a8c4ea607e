//! The attention-pooled item-CF network: per-item embeddings in two roles,
//! Hadamard pairwise interactions with the target item, a one-hidden-layer
//! attention scorer, beta-smoothed softmax pooling, an MLP tower and a
//! two-class softmax head.
//!
//! Everything here is pure: identical inputs produce bitwise-identical
//! outputs, and summations run in a fixed order (history index ascending) so
//! repeated runs and differently-threaded callers agree exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::tensor::{Affine, Matrix};
use crate::Label;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model requires at least one item")]
    NoItems,
    #[error("history is empty")]
    EmptyHistory,
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("got {got} attention weights for a history of length {expected}")]
    WeightLengthMismatch { expected: usize, got: usize },
    #[error("item id {item} out of range (num_items = {num_items})")]
    ItemOutOfRange { item: u32, num_items: usize },
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub mlp_widths: Vec<usize>,
    pub attention_hidden_dim: usize,
    /// Exponent of the `L^(-alpha)` pooling prefactor over history length L.
    pub alpha: f64,
    /// Softmax smoothing exponent in (0, 1]; 1 recovers the standard softmax.
    pub beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 16,
            mlp_widths: vec![64, 32, 16],
            attention_hidden_dim: 16,
            alpha: 0.0,
            beta: 0.8,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embedding_dim == 0 {
            return Err(ModelError::BadConfig("embedding_dim must be >= 1".into()));
        }
        if self.mlp_widths.is_empty() || self.mlp_widths.contains(&0) {
            return Err(ModelError::BadConfig(
                "mlp_widths must be non-empty and positive".into(),
            ));
        }
        if self.attention_hidden_dim == 0 {
            return Err(ModelError::BadConfig(
                "attention_hidden_dim must be >= 1".into(),
            ));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(ModelError::BadConfig(format!(
                "beta {} outside (0, 1]",
                self.beta
            )));
        }
        if !self.alpha.is_finite() {
            return Err(ModelError::BadConfig("alpha must be finite".into()));
        }
        Ok(())
    }
}

/// All learnable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    pub num_items: usize,
    /// History-role item embeddings, `num_items x d`.
    pub hist_emb: Matrix<F>,
    /// Target-role item embeddings, `num_items x d`.
    pub target_emb: Matrix<F>,
    /// Attention hidden layer, `h x d` plus bias.
    pub att_weight: Matrix<F>,
    pub att_bias: Vec<F>,
    /// Maps the attention hidden layer to the scalar logit.
    pub att_score: Vec<F>,
    /// MLP tower, `d -> mlp_widths`, ReLU after every layer.
    pub tower: Vec<Affine<F>>,
    /// Final affine onto the two class logits.
    pub head: Affine<F>,
}

impl<F: Scalar> ModelParams<F> {
    /// Number of learnable tensors. The enumeration order (embeddings,
    /// attention net, tower layers, head) is fixed; it is the checkpoint
    /// directory order and the optimizer walk order.
    pub fn tensor_count(&self) -> usize {
        5 + 2 * self.tower.len() + 2
    }

    pub fn tensor_name(&self, k: usize) -> String {
        match k {
            0 => "hist_emb".into(),
            1 => "target_emb".into(),
            2 => "att_weight".into(),
            3 => "att_bias".into(),
            4 => "att_score".into(),
            _ => {
                let i = k - 5;
                if i < 2 * self.tower.len() {
                    let part = if i % 2 == 0 { "weight" } else { "bias" };
                    format!("tower.{}.{part}", i / 2)
                } else if i == 2 * self.tower.len() {
                    "head.weight".into()
                } else {
                    "head.bias".into()
                }
            }
        }
    }

    pub fn tensor_shape(&self, k: usize) -> (usize, usize) {
        match k {
            0 => (self.hist_emb.rows(), self.hist_emb.cols()),
            1 => (self.target_emb.rows(), self.target_emb.cols()),
            2 => (self.att_weight.rows(), self.att_weight.cols()),
            3 => (self.att_bias.len(), 1),
            4 => (self.att_score.len(), 1),
            _ => {
                let i = k - 5;
                if i < 2 * self.tower.len() {
                    let layer = &self.tower[i / 2];
                    if i % 2 == 0 {
                        (layer.weight.rows(), layer.weight.cols())
                    } else {
                        (layer.bias.len(), 1)
                    }
                } else if i == 2 * self.tower.len() {
                    (self.head.weight.rows(), self.head.weight.cols())
                } else {
                    (self.head.bias.len(), 1)
                }
            }
        }
    }

    pub fn tensor_data(&self, k: usize) -> &[F] {
        match k {
            0 => self.hist_emb.data(),
            1 => self.target_emb.data(),
            2 => self.att_weight.data(),
            3 => &self.att_bias,
            4 => &self.att_score,
            _ => {
                let i = k - 5;
                if i < 2 * self.tower.len() {
                    let layer = &self.tower[i / 2];
                    if i % 2 == 0 {
                        layer.weight.data()
                    } else {
                        &layer.bias
                    }
                } else if i == 2 * self.tower.len() {
                    self.head.weight.data()
                } else {
                    &self.head.bias
                }
            }
        }
    }

    pub fn tensor_data_mut(&mut self, k: usize) -> &mut [F] {
        match k {
            0 => self.hist_emb.data_mut(),
            1 => self.target_emb.data_mut(),
            2 => self.att_weight.data_mut(),
            3 => &mut self.att_bias,
            4 => &mut self.att_score,
            _ => {
                let i = k - 5;
                if i < 2 * self.tower.len() {
                    let layer = &mut self.tower[i / 2];
                    if i % 2 == 0 {
                        layer.weight.data_mut()
                    } else {
                        &mut layer.bias
                    }
                } else if i == 2 * self.tower.len() {
                    self.head.weight.data_mut()
                } else {
                    &mut self.head.bias
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        (0..self.tensor_count()).all(|k| self.tensor_data(k).iter().all(|v| v.is_finite()))
    }
}

/// Attention weights over a history, aligned with history order.
///
/// With the smoothing exponent `beta` the weights are
/// `exp(logit_j) / (sum_k exp(logit_k))^beta`; they sum to
/// `S^(1-beta)` where `S` is the plain exponential sum, and to 1 when
/// `beta = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionDistribution<F> {
    pub weights: Vec<F>,
    pub beta: F,
}

/// Two-class output of one forward evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<F> {
    pub prob_neg: F,
    pub prob_pos: F,
    pub predicted_label: Label,
    /// Probability of the predicted label; always in [0.5, 1].
    pub confidence: F,
    pub attention: AttentionDistribution<F>,
}

impl<F: Scalar> Prediction<F> {
    pub fn prob_of(&self, label: Label) -> F {
        match label {
            Label::Negative => self.prob_neg,
            Label::Positive => self.prob_pos,
        }
    }
}

/// Cached intermediates of [`forward`], sufficient for exact
/// backpropagation and for re-pooling with permuted attention weights.
#[derive(Clone, Debug)]
pub struct ForwardTrace<F> {
    pub history: Vec<u32>,
    pub target: u32,
    /// Hadamard interactions `p_j * q_t`, one per history item.
    pub interactions: Vec<Vec<F>>,
    /// Attention hidden pre-activations, one `h`-vector per history item.
    pub att_pre: Vec<Vec<F>>,
    pub att_logits: Vec<F>,
    /// Standard (beta = 1) softmax of the logits; the smoothed-softmax
    /// Jacobian needs it.
    pub att_softmax: Vec<F>,
    pub att_weights: Vec<F>,
    pub pooled: Vec<F>,
    pub tower_pre: Vec<Vec<F>>,
    pub tower_out: Vec<Vec<F>>,
    pub head_logits: [F; 2],
    pub probs: [F; 2],
}

fn check_items<F: Scalar>(
    params: &ModelParams<F>,
    history: &[u32],
    target: u32,
) -> Result<(), ModelError> {
    if history.is_empty() {
        return Err(ModelError::EmptyHistory);
    }
    for &item in history.iter().chain(std::iter::once(&target)) {
        if item as usize >= params.num_items {
            return Err(ModelError::ItemOutOfRange {
                item,
                num_items: params.num_items,
            });
        }
    }
    debug_assert!(
        !history.contains(&target),
        "target must not appear in the history"
    );
    Ok(())
}

/// Random initialization: embeddings from N(0, 0.01^2) truncated at two
/// standard deviations, affine weights Glorot-uniform, biases zero. The
/// draw order (embeddings row-major, then attention, then tower, then head)
/// is fixed, so a seed pins every parameter bit.
pub fn init_params<F: Scalar>(
    config: &ModelConfig,
    num_items: usize,
    stream: &mut Stream,
) -> Result<ModelParams<F>, ModelError> {
    config.validate()?;
    if num_items == 0 {
        return Err(ModelError::NoItems);
    }
    let d = config.embedding_dim;
    let h = config.attention_hidden_dim;

    let embed = |stream: &mut Stream| F::from_f64(stream.truncated_normal(0.01, 2.0));
    let hist_emb = Matrix::from_fn(num_items, d, |_, _| embed(stream));
    let target_emb = Matrix::from_fn(num_items, d, |_, _| embed(stream));

    let glorot = |stream: &mut Stream, fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        F::from_f64(stream.uniform(-bound, bound))
    };
    let att_weight = Matrix::from_fn(h, d, |_, _| glorot(stream, d, h));
    let att_bias = vec![F::zero(); h];
    let att_score: Vec<F> = (0..h).map(|_| glorot(stream, h, 1)).collect();

    let mut tower = Vec::with_capacity(config.mlp_widths.len());
    let mut in_dim = d;
    for &out_dim in &config.mlp_widths {
        tower.push(Affine {
            weight: Matrix::from_fn(out_dim, in_dim, |_, _| glorot(stream, in_dim, out_dim)),
            bias: vec![F::zero(); out_dim],
        });
        in_dim = out_dim;
    }
    let head = Affine {
        weight: Matrix::from_fn(2, in_dim, |_, _| glorot(stream, in_dim, 2)),
        bias: vec![F::zero(); 2],
    };

    Ok(ModelParams {
        config: config.clone(),
        num_items,
        hist_emb,
        target_emb,
        att_weight,
        att_bias,
        att_score,
        tower,
        head,
    })
}

/// Overwrite every tensor (biases included) with uniform draws from
/// `[lo, hi)`. The gradient-check harness needs parameters at generic
/// unit-scale positions; the production initialization keeps embeddings so
/// small that downstream gradients sit at the finite-difference noise floor.
pub fn randomize_params<F: Scalar>(
    params: &mut ModelParams<F>,
    lo: f64,
    hi: f64,
    stream: &mut Stream,
) {
    for k in 0..params.tensor_count() {
        for v in params.tensor_data_mut(k) {
            *v = F::from_f64(stream.uniform(lo, hi));
        }
    }
}

pub(crate) fn interaction_vectors<F: Scalar>(
    params: &ModelParams<F>,
    history: &[u32],
    target: u32,
) -> Vec<Vec<F>> {
    let q = params.target_emb.row(target as usize);
    history
        .iter()
        .map(|&j| {
            params
                .hist_emb
                .row(j as usize)
                .iter()
                .zip(q)
                .map(|(&p, &qv)| p * qv)
                .collect()
        })
        .collect()
}

/// Attention scorer: per interaction vector, pre-activations `W e + b` and
/// the logit `v . ReLU(W e + b)`.
fn attention_scores<F: Scalar>(
    params: &ModelParams<F>,
    interactions: &[Vec<F>],
) -> (Vec<Vec<F>>, Vec<F>) {
    let h = params.att_bias.len();
    let mut pre_all = Vec::with_capacity(interactions.len());
    let mut logits = Vec::with_capacity(interactions.len());
    for e in interactions {
        let mut pre = vec![F::zero(); h];
        params.att_weight.matvec(e, &mut pre);
        let mut logit = F::zero();
        for (p, (&b, &v)) in pre
            .iter_mut()
            .zip(params.att_bias.iter().zip(&params.att_score))
        {
            *p = *p + b;
            if *p > F::zero() {
                logit = logit + v * *p;
            }
        }
        pre_all.push(pre);
        logits.push(logit);
    }
    (pre_all, logits)
}

/// Attention compatibility logits `v . ReLU(W (p_j * q_t) + b)` for every
/// history item.
pub fn attention_logits<F: Scalar>(
    params: &ModelParams<F>,
    history: &[u32],
    target: u32,
) -> Result<Vec<F>, ModelError> {
    check_items(params, history, target)?;
    let interactions = interaction_vectors(params, history, target);
    Ok(attention_scores(params, &interactions).1)
}

/// Smoothed softmax `weight_j = exp(logit_j) / (sum_k exp(logit_k))^beta`.
///
/// Computed with max-subtraction: with `m = max logit`,
/// `exp(logit_j - m) / (sum_k exp(logit_k - m))^beta * exp(m (1 - beta))`,
/// which is algebraically identical but cannot overflow for beta = 1 and
/// pushes the overflow point far out for beta < 1.
pub fn attention_weights<F: Scalar>(logits: &[F], beta: F) -> AttentionDistribution<F> {
    let (_, weights) = smoothed_softmax(logits, beta);
    AttentionDistribution { weights, beta }
}

/// Returns `(standard softmax, beta-smoothed weights)` in one pass.
fn smoothed_softmax<F: Scalar>(logits: &[F], beta: F) -> (Vec<F>, Vec<F>) {
    if logits.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let m = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let shifted: Vec<F> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum = shifted.iter().fold(F::zero(), |acc, &x| acc + x);
    let softmax: Vec<F> = shifted.iter().map(|&x| x / sum).collect();
    let correction = (m * (F::one() - beta)).exp();
    let denom = sum.powf(beta);
    let weights: Vec<F> = shifted.iter().map(|&x| x / denom * correction).collect();
    (softmax, weights)
}

pub(crate) fn pool_interactions<F: Scalar>(
    interactions: &[Vec<F>],
    weights: &[F],
    alpha: f64,
) -> Vec<F> {
    let d = interactions[0].len();
    let mut out = vec![F::zero(); d];
    for (e, &w) in interactions.iter().zip(weights) {
        for (o, &x) in out.iter_mut().zip(e) {
            *o = *o + w * x;
        }
    }
    let scale = F::from_f64((interactions.len() as f64).powf(-alpha));
    for o in &mut out {
        *o = *o * scale;
    }
    out
}

/// Attention-weighted pooling `L^(-alpha) * sum_j weight_j (p_j * q_t)`.
pub fn pool<F: Scalar>(
    params: &ModelParams<F>,
    history: &[u32],
    target: u32,
    attention: &AttentionDistribution<F>,
    alpha: f64,
) -> Result<Vec<F>, ModelError> {
    check_items(params, history, target)?;
    if attention.weights.len() != history.len() {
        return Err(ModelError::WeightLengthMismatch {
            expected: history.len(),
            got: attention.weights.len(),
        });
    }
    Ok(pool_interactions(
        &interaction_vectors(params, history, target),
        &attention.weights,
        alpha,
    ))
}

fn relu<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

fn softmax2<F: Scalar>(logits: [F; 2]) -> [F; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let sum = e0 + e1;
    [e0 / sum, e1 / sum]
}

fn tower_trace<F: Scalar>(
    params: &ModelParams<F>,
    pooled: &[F],
) -> (Vec<Vec<F>>, Vec<Vec<F>>, [F; 2], [F; 2]) {
    let mut pre_all = Vec::with_capacity(params.tower.len());
    let mut out_all = Vec::with_capacity(params.tower.len());
    let mut x = pooled.to_vec();
    for layer in &params.tower {
        let mut pre = vec![F::zero(); layer.out_dim()];
        layer.apply(&x, &mut pre);
        let out: Vec<F> = pre.iter().map(|&z| relu(z)).collect();
        pre_all.push(pre);
        x = out.clone();
        out_all.push(out);
    }
    let mut head_logits = vec![F::zero(); 2];
    params.head.apply(&x, &mut head_logits);
    let head_logits = [head_logits[0], head_logits[1]];
    let probs = softmax2(head_logits);
    (pre_all, out_all, head_logits, probs)
}

/// Tower + head on an already-pooled vector; the class probabilities only.
/// Used by the permutation audit, which re-pools cached interactions for
/// every shuffle. Arithmetic is identical to [`forward`].
pub fn tower_probs<F: Scalar>(params: &ModelParams<F>, pooled: &[F]) -> [F; 2] {
    tower_trace(params, pooled).3
}

fn prediction_of<F: Scalar>(probs: [F; 2], attention: AttentionDistribution<F>) -> Prediction<F> {
    // Argmax with exact ties going to the negative class.
    let predicted_label = if probs[1] > probs[0] {
        Label::Positive
    } else {
        Label::Negative
    };
    Prediction {
        prob_neg: probs[0],
        prob_pos: probs[1],
        predicted_label,
        confidence: probs[0].max(probs[1]),
        attention,
    }
}

/// Full forward evaluation of one (history, target) pair.
pub fn forward<F: Scalar>(
    params: &ModelParams<F>,
    history: &[u32],
    target: u32,
) -> Result<(Prediction<F>, ForwardTrace<F>), ModelError> {
    check_items(params, history, target)?;
    let beta = F::from_f64(params.config.beta);
    let interactions = interaction_vectors(params, history, target);
    let (att_pre, att_logits) = attention_scores(params, &interactions);
    let (att_softmax, att_weights) = smoothed_softmax(&att_logits, beta);
    let pooled = pool_interactions(&interactions, &att_weights, params.config.alpha);
    let (tower_pre, tower_out, head_logits, probs) = tower_trace(params, &pooled);

    let attention = AttentionDistribution {
        weights: att_weights.clone(),
        beta,
    };
    let prediction = prediction_of(probs, attention);
    let trace = ForwardTrace {
        history: history.to_vec(),
        target,
        interactions,
        att_pre,
        att_logits,
        att_softmax,
        att_weights,
        pooled,
        tower_pre,
        tower_out,
        head_logits,
        probs,
    };
    Ok((prediction, trace))
}

/// Forward with the attention path bypassed: `fixed_weights` are used
/// directly in pooling. With the model's own weights this reproduces
/// [`forward`] bit for bit.
pub fn forward_with_attention<F: Scalar>(
    params: &ModelParams<F>,
    history: &[u32],
    target: u32,
    fixed_weights: &[F],
) -> Result<Prediction<F>, ModelError> {
    check_items(params, history, target)?;
    if fixed_weights.len() != history.len() {
        return Err(ModelError::WeightLengthMismatch {
            expected: history.len(),
            got: fixed_weights.len(),
        });
    }
    let interactions = interaction_vectors(params, history, target);
    let pooled = pool_interactions(&interactions, fixed_weights, params.config.alpha);
    let probs = tower_probs(params, &pooled);
    let attention = AttentionDistribution {
        weights: fixed_weights.to_vec(),
        beta: F::from_f64(params.config.beta),
    };
    Ok(prediction_of(probs, attention))
}
