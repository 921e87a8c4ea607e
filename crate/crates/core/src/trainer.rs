//! Training: weighted two-class cross-entropy, exact backpropagation through
//! the attention network, Adagrad updates, the seeded epoch loop with
//! per-epoch negative resampling, checkpoint I/O, and a finite-difference
//! gradient verification harness.
//!
//! Determinism contract: every source of randomness (parameter init, epoch
//! example sampling, shuffling) is a sub-stream derived from the run seed,
//! and all reductions run in a fixed order, so an identical
//! [`TrainRunConfig`] reproduces the final parameters bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{epoch_examples, SplitDataset};
use crate::metrics::{self, MetricsError};
use crate::model::{
    forward, init_params, ForwardTrace, ModelConfig, ModelError, ModelParams, Prediction,
};
use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::tensor::{add_assign, dot, Affine, Matrix};
use crate::Label;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before the log.
const CLAMP: f64 = 1e-12;
const ADAGRAD_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("class weighting needs neg_ratio >= 1 (got 0: no negative class)")]
    DegenerateClass,
    #[error("invalid run config: {0}")]
    Invalid(String),
    #[error("trace does not match params: {0}")]
    TraceMismatch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in {tensor}")]
    NonFiniteGradient { tensor: String },
    #[error("training aborted: non-finite {what} at epoch {epoch}, batch {batch}")]
    Aborted {
        what: String,
        epoch: usize,
        batch: usize,
    },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Per-class loss weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig<F> {
    pub weight_negative: F,
    pub weight_positive: F,
}

impl<F: Scalar> LossConfig<F> {
    pub fn unweighted() -> Self {
        LossConfig {
            weight_negative: F::one(),
            weight_positive: F::one(),
        }
    }

    /// Inverse-class-frequency weights for a `neg_ratio : 1` example stream.
    pub fn balanced(neg_ratio: usize) -> Result<Self, TrainError> {
        let (w_neg, w_pos) = class_weights(neg_ratio)?;
        Ok(LossConfig {
            weight_negative: F::from_f64(w_neg),
            weight_positive: F::from_f64(w_pos),
        })
    }

    pub fn weight(&self, label: Label) -> F {
        match label {
            Label::Negative => self.weight_negative,
            Label::Positive => self.weight_positive,
        }
    }
}

/// Class weights `w_c = (n_pos + n_neg) / (2 n_c)` for a stream with one
/// positive per `neg_ratio` negatives. Both classes then contribute equal
/// expected loss mass while the mean example weight stays 1.
pub fn class_weights(neg_ratio: usize) -> Result<(f64, f64), TrainError> {
    if neg_ratio == 0 {
        return Err(TrainError::DegenerateClass);
    }
    let n_pos = 1.0;
    let n_neg = neg_ratio as f64;
    let total = n_pos + n_neg;
    Ok((total / (2.0 * n_neg), total / (2.0 * n_pos)))
}

/// `-w_label * ln(p_true)` with the probability clamped away from 0 and 1.
pub fn weighted_cross_entropy<F: Scalar>(
    prediction: &Prediction<F>,
    label: Label,
    loss: &LossConfig<F>,
) -> F {
    let lo = F::from_f64(CLAMP);
    let hi = F::one() - lo;
    let p = prediction.prob_of(label).max(lo).min(hi);
    -loss.weight(label) * p.ln()
}

/// Gradients, one tensor per [`ModelParams`] tensor. The tensor enumeration
/// mirrors the params exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F> {
    pub hist_emb: Matrix<F>,
    pub target_emb: Matrix<F>,
    pub att_weight: Matrix<F>,
    pub att_bias: Vec<F>,
    pub att_score: Vec<F>,
    pub tower: Vec<Affine<F>>,
    pub head: Affine<F>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(params: &ModelParams<F>) -> Self {
        Gradients {
            hist_emb: Matrix::zeros(params.hist_emb.rows(), params.hist_emb.cols()),
            target_emb: Matrix::zeros(params.target_emb.rows(), params.target_emb.cols()),
            att_weight: Matrix::zeros(params.att_weight.rows(), params.att_weight.cols()),
            att_bias: vec![F::zero(); params.att_bias.len()],
            att_score: vec![F::zero(); params.att_score.len()],
            tower: params
                .tower
                .iter()
                .map(|l| Affine::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            head: Affine::zeros(params.head.out_dim(), params.head.in_dim()),
        }
    }

    pub fn tensor_count(&self) -> usize {
        5 + 2 * self.tower.len() + 2
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

    pub fn zero(&mut self) {
        for k in 0..self.tensor_count() {
            for v in self.tensor_data_mut(k) {
                *v = F::zero();
            }
        }
    }

    pub fn scale(&mut self, factor: F) {
        for k in 0..self.tensor_count() {
            for v in self.tensor_data_mut(k) {
                *v = *v * factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        (0..self.tensor_count()).all(|k| self.tensor_data(k).iter().all(|v| v.is_finite()))
    }
}

fn validate_trace<F: Scalar>(
    params: &ModelParams<F>,
    trace: &ForwardTrace<F>,
) -> Result<(), TrainError> {
    let d = params.config.embedding_dim;
    let len = trace.history.len();
    let fail = |msg: String| Err(TrainError::TraceMismatch(msg));
    if len == 0 {
        return fail("empty history".into());
    }
    if trace.target as usize >= params.num_items
        || trace
            .history
            .iter()
            .any(|&j| j as usize >= params.num_items)
    {
        return fail(format!("item ids exceed num_items {}", params.num_items));
    }
    if trace.interactions.len() != len
        || trace.att_pre.len() != len
        || trace.att_logits.len() != len
        || trace.att_softmax.len() != len
        || trace.att_weights.len() != len
    {
        return fail("per-item intermediates disagree with history length".into());
    }
    if trace.interactions.iter().any(|e| e.len() != d) || trace.pooled.len() != d {
        return fail(format!("interaction width differs from embedding_dim {d}"));
    }
    if trace
        .att_pre
        .iter()
        .any(|p| p.len() != params.att_bias.len())
    {
        return fail("attention hidden width mismatch".into());
    }
    if trace.tower_pre.len() != params.tower.len() || trace.tower_out.len() != params.tower.len() {
        return fail("tower depth mismatch".into());
    }
    for (l, layer) in params.tower.iter().enumerate() {
        if trace.tower_pre[l].len() != layer.out_dim()
            || trace.tower_out[l].len() != layer.out_dim()
        {
            return fail(format!("tower layer {l} width mismatch"));
        }
    }
    Ok(())
}

/// Accumulate the exact gradient of the weighted cross-entropy into `out`.
pub fn backward_into<F: Scalar>(
    params: &ModelParams<F>,
    trace: &ForwardTrace<F>,
    label: Label,
    loss: &LossConfig<F>,
    out: &mut Gradients<F>,
) -> Result<(), TrainError> {
    validate_trace(params, trace)?;
    let d = params.config.embedding_dim;
    let len = trace.history.len();
    let beta = F::from_f64(params.config.beta);

    // Head logits: w * (softmax - onehot). The clamp makes the loss locally
    // constant in the saturated region, so the gradient there is zero.
    let y = label.index();
    let p_true = trace.probs[y];
    let lo = F::from_f64(CLAMP);
    let hi = F::one() - lo;
    let w_label = loss.weight(label);
    let mut g_head_logits = [F::zero(); 2];
    if p_true > lo && p_true < hi {
        for k in 0..2 {
            let onehot = if k == y { F::one() } else { F::zero() };
            g_head_logits[k] = w_label * (trace.probs[k] - onehot);
        }
    }

    // Head affine.
    let x_last = trace.tower_out.last().expect("tower is non-empty");
    add_assign(&mut out.head.bias, &g_head_logits);
    out.head.weight.add_outer(&g_head_logits, x_last);
    let mut g_x = vec![F::zero(); x_last.len()];
    params.head.weight.tr_matvec_add(&g_head_logits, &mut g_x);

    // Tower, back to front.
    for l in (0..params.tower.len()).rev() {
        let pre = &trace.tower_pre[l];
        let input: &[F] = if l == 0 {
            &trace.pooled
        } else {
            &trace.tower_out[l - 1]
        };
        let mut g_pre = vec![F::zero(); pre.len()];
        for (gp, (&gx, &z)) in g_pre.iter_mut().zip(g_x.iter().zip(pre)) {
            if z > F::zero() {
                *gp = gx;
            }
        }
        add_assign(&mut out.tower[l].bias, &g_pre);
        out.tower[l].weight.add_outer(&g_pre, input);
        let mut g_in = vec![F::zero(); input.len()];
        params.tower[l].weight.tr_matvec_add(&g_pre, &mut g_in);
        g_x = g_in;
    }
    let g_pooled = g_x;

    // Pooling: pooled = L^(-alpha) * sum_j weight_j * e_j.
    let scale = F::from_f64((len as f64).powf(-params.config.alpha));
    let g_weights: Vec<F> = trace
        .interactions
        .iter()
        .map(|e| scale * dot(&g_pooled, e))
        .collect();

    // Smoothed softmax Jacobian:
    // d weight_j / d logit_k = weight_j (delta_jk - beta softmax_k).
    let inner = g_weights
        .iter()
        .zip(&trace.att_weights)
        .fold(F::zero(), |acc, (&g, &w)| acc + g * w);
    let g_att_logits: Vec<F> = (0..len)
        .map(|k| trace.att_weights[k] * g_weights[k] - beta * trace.att_softmax[k] * inner)
        .collect();

    // Attention net and embeddings, one history item at a time.
    let h = params.att_bias.len();
    let mut g_target = vec![F::zero(); d];
    for j in 0..len {
        let e = &trace.interactions[j];
        let ga = g_att_logits[j];
        let mut g_hidden = vec![F::zero(); h];
        for r in 0..h {
            let pre = trace.att_pre[j][r];
            if pre > F::zero() {
                out.att_score[r] = out.att_score[r] + ga * pre;
                g_hidden[r] = ga * params.att_score[r];
            }
        }
        add_assign(&mut out.att_bias, &g_hidden);
        out.att_weight.add_outer(&g_hidden, e);

        // d loss / d e_j: attention path plus pooling path.
        let mut g_e = vec![F::zero(); d];
        params.att_weight.tr_matvec_add(&g_hidden, &mut g_e);
        let pool_coeff = scale * trace.att_weights[j];
        for (ge, &gp) in g_e.iter_mut().zip(&g_pooled) {
            *ge = *ge + pool_coeff * gp;
        }

        // e_j = p_j * q_t elementwise.
        let p_row = params.hist_emb.row(trace.history[j] as usize);
        let q_row = params.target_emb.row(trace.target as usize);
        let g_p = out.hist_emb.row_mut(trace.history[j] as usize);
        for c in 0..d {
            g_p[c] = g_p[c] + g_e[c] * q_row[c];
            g_target[c] = g_target[c] + g_e[c] * p_row[c];
        }
    }
    add_assign(out.target_emb.row_mut(trace.target as usize), &g_target);
    Ok(())
}

/// Exact gradient of the weighted cross-entropy for one example.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    trace: &ForwardTrace<F>,
    label: Label,
    loss: &LossConfig<F>,
) -> Result<Gradients<F>, TrainError> {
    let mut out = Gradients::zeros_like(params);
    backward_into(params, trace, label, loss, &mut out)?;
    Ok(out)
}

/// One (history, target, label) training case for the loss helpers.
#[derive(Clone, Copy, Debug)]
pub struct LossExample<'a> {
    pub history: &'a [u32],
    pub target: u32,
    pub label: Label,
}

/// Forward plus loss for one example.
pub fn example_loss<F: Scalar>(
    params: &ModelParams<F>,
    example: &LossExample<'_>,
    loss: &LossConfig<F>,
) -> Result<F, TrainError> {
    let (prediction, _) = forward(params, example.history, example.target)?;
    Ok(weighted_cross_entropy(&prediction, example.label, loss))
}

/// Central-difference check of [`backward`] against the loss itself.
/// Samples up to 200 coordinates per tensor and returns the maximum
/// relative error `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn finite_difference_check<F: Scalar>(
    params: &ModelParams<F>,
    example: &LossExample<'_>,
    loss: &LossConfig<F>,
    epsilon: f64,
    stream: &mut Stream,
) -> Result<f64, TrainError> {
    let (_, trace) = forward(params, example.history, example.target)?;
    let grads = backward(params, &trace, example.label, loss)?;
    finite_difference_check_against(params, &grads, example, loss, epsilon, stream)
}

/// As [`finite_difference_check`], but against externally supplied
/// gradients, so a corrupted gradient can be shown to trip the harness.
pub fn finite_difference_check_against<F: Scalar>(
    params: &ModelParams<F>,
    grads: &Gradients<F>,
    example: &LossExample<'_>,
    loss: &LossConfig<F>,
    epsilon: f64,
    stream: &mut Stream,
) -> Result<f64, TrainError> {
    const COORDS_PER_TENSOR: usize = 200;
    let mut work = params.clone();
    let eps = F::from_f64(epsilon);
    let mut max_rel: f64 = 0.0;
    for k in 0..work.tensor_count() {
        let n = work.tensor_data(k).len();
        let coords: Vec<usize> = if n <= COORDS_PER_TENSOR {
            (0..n).collect()
        } else {
            let mut pool: Vec<u32> = (0..n as u32).collect();
            stream
                .take_distinct(&mut pool, COORDS_PER_TENSOR)
                .into_iter()
                .map(|i| i as usize)
                .collect()
        };
        for c in coords {
            let original = work.tensor_data(k)[c];
            work.tensor_data_mut(k)[c] = original + eps;
            let loss_plus = example_loss(&work, example, loss)?.as_f64();
            work.tensor_data_mut(k)[c] = original - eps;
            let loss_minus = example_loss(&work, example, loss)?.as_f64();
            work.tensor_data_mut(k)[c] = original;
            let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
            let analytic = grads.tensor_data(k)[c].as_f64();
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

/// Adagrad accumulator state.
#[derive(Clone, Debug)]
pub struct OptimizerState<F> {
    pub accum: Gradients<F>,
    pub learning_rate: F,
    pub epsilon: F,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(params: &ModelParams<F>, learning_rate: F) -> Self {
        OptimizerState {
            accum: Gradients::zeros_like(params),
            learning_rate,
            epsilon: F::from_f64(ADAGRAD_EPSILON),
        }
    }
}

/// One Adagrad step: `acc += g^2; theta -= lr * g / (sqrt(acc) + eps)`.
/// Rejects non-finite gradients so training aborts instead of silently
/// corrupting the parameters.
pub fn adagrad_update<F: Scalar>(
    params: &mut ModelParams<F>,
    grads: &Gradients<F>,
    state: &mut OptimizerState<F>,
) -> Result<(), TrainError> {
    let count = params.tensor_count();
    if grads.tensor_count() != count || state.accum.tensor_count() != count {
        return Err(TrainError::Shape(
            "gradient tensor count differs from params".into(),
        ));
    }
    for k in 0..count {
        let g = grads.tensor_data(k);
        if g.len() != params.tensor_data(k).len() {
            return Err(TrainError::Shape(format!(
                "tensor {} has {} gradient entries, expected {}",
                params.tensor_name(k),
                g.len(),
                params.tensor_data(k).len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient {
                tensor: params.tensor_name(k),
            });
        }
    }
    let lr = state.learning_rate;
    let eps = state.epsilon;
    for k in 0..count {
        let g = grads.tensor_data(k);
        let acc = state.accum.tensor_data_mut(k);
        let theta = params.tensor_data_mut(k);
        for i in 0..g.len() {
            acc[i] = acc[i] + g[i] * g[i];
            theta[i] = theta[i] - lr * g[i] / (acc[i].sqrt() + eps);
        }
    }
    Ok(())
}

/// Full run configuration; the seed pins the entire run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub neg_ratio: usize,
    pub learning_rate: f64,
    pub class_weighting: bool,
    pub model: ModelConfig,
    /// Evaluate (and consider for best-checkpoint selection) every this many
    /// epochs; 0 disables evaluation.
    pub eval_every: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            seed: 42,
            epochs: 50,
            batch_size: 256,
            neg_ratio: 4,
            learning_rate: 0.01,
            class_weighting: false,
            model: ModelConfig::default(),
            eval_every: 1,
        }
    }
}

/// One evaluation point of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub hr_at_10: f64,
    pub ndcg_at_10: f64,
}

/// Final parameters plus the run that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel<F> {
    pub params: ModelParams<F>,
    pub run_config: TrainRunConfig,
    pub history: Vec<EpochStats>,
}

/// Train on a prepared split. Examples are resampled every epoch from an
/// epoch-derived stream; batches accumulate the mean gradient and apply one
/// Adagrad step each. When evaluation is enabled, the parameters with the
/// best HR@10 seen are returned; otherwise the final parameters.
pub fn train<F: Scalar>(
    split: &SplitDataset,
    run_config: &TrainRunConfig,
) -> Result<TrainedModel<F>, TrainError> {
    if run_config.learning_rate <= 0.0 || !run_config.learning_rate.is_finite() {
        return Err(TrainError::Invalid(format!(
            "learning_rate {} must be positive",
            run_config.learning_rate
        )));
    }
    if run_config.batch_size == 0 {
        return Err(TrainError::Invalid("batch_size must be >= 1".into()));
    }
    let loss: LossConfig<F> = if run_config.class_weighting {
        LossConfig::balanced(run_config.neg_ratio)?
    } else {
        LossConfig::unweighted()
    };

    let master = Stream::new(run_config.seed);
    let mut init_stream = master.derive("init", &[]);
    let mut params: ModelParams<F> =
        init_params(&run_config.model, split.num_items, &mut init_stream)?;
    let mut optimizer = OptimizerState::new(&params, F::from_f64(run_config.learning_rate));

    let mut history = Vec::new();
    let mut best: Option<(f64, ModelParams<F>)> = None;

    for epoch in 0..run_config.epochs {
        let mut epoch_stream = master.derive("epoch", &[epoch as u64]);
        let examples = epoch_examples(split, run_config.neg_ratio, &mut epoch_stream);
        let mut grads = Gradients::zeros_like(&params);
        let mut loss_sum = F::zero();

        for (batch_index, batch) in examples.chunks(run_config.batch_size).enumerate() {
            grads.zero();
            let mut batch_loss = F::zero();
            for example in batch {
                let history_items = history_excluding(split, example.user, example.item);
                let (prediction, trace) = forward(&params, &history_items, example.item)?;
                batch_loss = batch_loss + weighted_cross_entropy(&prediction, example.label, &loss);
                backward_into(&params, &trace, example.label, &loss, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Aborted {
                    what: "loss".into(),
                    epoch: epoch + 1,
                    batch: batch_index + 1,
                });
            }
            grads.scale(F::one() / F::from_f64(batch.len() as f64));
            adagrad_update(&mut params, &grads, &mut optimizer).map_err(|e| match e {
                TrainError::NonFiniteGradient { tensor } => TrainError::Aborted {
                    what: format!("gradient ({tensor})"),
                    epoch: epoch + 1,
                    batch: batch_index + 1,
                },
                other => other,
            })?;
            loss_sum = loss_sum + batch_loss;
        }

        if run_config.eval_every > 0 && (epoch + 1) % run_config.eval_every == 0 {
            let report = metrics::evaluate(&params, split)?;
            let mean_loss = if examples.is_empty() {
                0.0
            } else {
                loss_sum.as_f64() / examples.len() as f64
            };
            history.push(EpochStats {
                epoch: epoch + 1,
                mean_loss,
                hr_at_10: report.hr_at_10,
                ndcg_at_10: report.ndcg_at_10,
            });
            if best.as_ref().map_or(true, |(hr, _)| report.hr_at_10 > *hr) {
                best = Some((report.hr_at_10, params.clone()));
            }
        }
    }

    let params = match best {
        Some((_, best_params)) => best_params,
        None => params,
    };
    Ok(TrainedModel {
        params,
        run_config: run_config.clone(),
        history,
    })
}

/// Train history of `user` with `target` removed. Positive examples come
/// from the history itself, so the scored item never appears in the history
/// it is scored against.
fn history_excluding(split: &SplitDataset, user: u32, target: u32) -> Vec<u32> {
    split.train[user as usize]
        .iter()
        .map(|&(item, _)| item)
        .filter(|&item| item != target)
        .collect()
}

const CHECKPOINT_MAGIC: &[u8; 9] = b"ATNAUDIT1";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Byte offset into the payload section.
    offset: u64,
    /// Payload length in bytes.
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    num_items: usize,
    run_config: TrainRunConfig,
    history: Vec<EpochStats>,
    tensors: Vec<TensorEntry>,
}

fn checkpoint_err(path: &Path, msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Write a checkpoint: the magic string, a length-prefixed JSON header
/// (config, seed, eval history, tensor directory with byte offsets), then
/// the tensors as little-endian f64 in directory order.
pub fn save_checkpoint<F: Scalar>(model: &TrainedModel<F>, path: &Path) -> Result<(), TrainError> {
    let params = &model.params;
    let mut tensors = Vec::with_capacity(params.tensor_count());
    let mut offset = 0u64;
    for k in 0..params.tensor_count() {
        let (rows, cols) = params.tensor_shape(k);
        let len = (rows * cols * 8) as u64;
        tensors.push(TensorEntry {
            name: params.tensor_name(k),
            rows,
            cols,
            offset,
            len,
        });
        offset += len;
    }
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        num_items: params.num_items,
        run_config: model.run_config.clone(),
        history: model.history.clone(),
        tensors,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| checkpoint_err(path, format!("header encoding failed: {e}")))?;

    let mut bytes =
        Vec::with_capacity(CHECKPOINT_MAGIC.len() + 8 + header_json.len() + offset as usize);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for k in 0..params.tensor_count() {
        for v in params.tensor_data(k) {
            bytes.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Read a checkpoint written by [`save_checkpoint`]. Shapes are validated
/// against the embedded config before any tensor is accepted.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<TrainedModel<F>, TrainError> {
    let bytes = fs::read(path).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if bytes.len() < CHECKPOINT_MAGIC.len() + 8 {
        return Err(checkpoint_err(path, "file too short for header"));
    }
    if &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(checkpoint_err(path, "bad magic string"));
    }
    let mut pos = CHECKPOINT_MAGIC.len();
    let header_len = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    if bytes.len() < pos + header_len {
        return Err(checkpoint_err(path, "truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[pos..pos + header_len])
        .map_err(|e| checkpoint_err(path, format!("header decoding failed: {e}")))?;
    pos += header_len;
    if header.version != CHECKPOINT_VERSION {
        return Err(checkpoint_err(
            path,
            format!("unsupported version {}", header.version),
        ));
    }

    // Build a zero-valued parameter set from the declared config, then
    // require the tensor directory to match it exactly.
    header.run_config.model.validate()?;
    if header.num_items == 0 {
        return Err(checkpoint_err(path, "num_items is zero"));
    }
    let mut params: ModelParams<F> = empty_params(&header.run_config.model, header.num_items);
    if header.tensors.len() != params.tensor_count() {
        return Err(checkpoint_err(
            path,
            format!(
                "tensor directory has {} entries, config implies {}",
                header.tensors.len(),
                params.tensor_count()
            ),
        ));
    }
    let payload = &bytes[pos..];
    let mut expected_offset = 0u64;
    for (k, entry) in header.tensors.iter().enumerate() {
        let name = params.tensor_name(k);
        let (rows, cols) = params.tensor_shape(k);
        if entry.name != name {
            return Err(checkpoint_err(
                path,
                format!("tensor {k} is {:?}, expected {name:?}", entry.name),
            ));
        }
        if (entry.rows, entry.cols) != (rows, cols) {
            return Err(checkpoint_err(
                path,
                format!(
                    "tensor {name} has shape {}x{}, config implies {rows}x{cols}",
                    entry.rows, entry.cols
                ),
            ));
        }
        if entry.offset != expected_offset || entry.len != (rows * cols * 8) as u64 {
            return Err(checkpoint_err(
                path,
                format!("tensor {name} directory is inconsistent"),
            ));
        }
        expected_offset += entry.len;
        let start = entry.offset as usize;
        let end = start + entry.len as usize;
        if payload.len() < end {
            return Err(checkpoint_err(
                path,
                format!("truncated payload in tensor {name}"),
            ));
        }
        let dst = params.tensor_data_mut(k);
        for (i, chunk) in payload[start..end].chunks_exact(8).enumerate() {
            dst[i] = F::from_f64(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
    }
    if payload.len() as u64 != expected_offset {
        return Err(checkpoint_err(path, "trailing bytes after last tensor"));
    }
    Ok(TrainedModel {
        params,
        run_config: header.run_config,
        history: header.history,
    })
}

fn empty_params<F: Scalar>(config: &ModelConfig, num_items: usize) -> ModelParams<F> {
    let d = config.embedding_dim;
    let h = config.attention_hidden_dim;
    let mut tower = Vec::with_capacity(config.mlp_widths.len());
    let mut in_dim = d;
    for &out_dim in &config.mlp_widths {
        tower.push(Affine::zeros(out_dim, in_dim));
        in_dim = out_dim;
    }
    ModelParams {
        config: config.clone(),
        num_items,
        hist_emb: Matrix::zeros(num_items, d),
        target_emb: Matrix::zeros(num_items, d),
        att_weight: Matrix::zeros(h, d),
        att_bias: vec![F::zero(); h],
        att_score: vec![F::zero(); h],
        tower,
        head: Affine::zeros(2, in_dim),
    }
}

/// Initial parameters for a run config, without any training. The same
/// stream labels as [`train`] are used, so `epochs = 0` training and this
/// function agree bitwise.
pub fn initial_model<F: Scalar>(
    split: &SplitDataset,
    run_config: &TrainRunConfig,
) -> Result<TrainedModel<F>, TrainError> {
    let master = Stream::new(run_config.seed);
    let mut init_stream = master.derive("init", &[]);
    let params = init_params(&run_config.model, split.num_items, &mut init_stream)?;
    Ok(TrainedModel {
        params,
        run_config: run_config.clone(),
        history: Vec::new(),
    })
}
