//! Audit instruments over a trained model: reliability diagrams with
//! expected calibration error, attention-weight permutation experiments, and
//! cross-seed attention-stability analysis.
//!
//! Confidence is always the probability of the predicted label, so it lives
//! in [0.5, 1]; diagrams bin that range into equal-width bins, interval
//! `[lo, hi)` with the last bin closed. Audit passes are read-only over the
//! model: cases run in parallel with per-case derived random streams and an
//! order-preserving merge, so reports are byte-identical at any thread
//! count.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{IdMap, SplitDataset};
use crate::metrics::{self, jaccard, MetricsError};
use crate::model::{
    forward, pool_interactions, tower_probs, AttentionDistribution, ModelError, ModelParams,
    Prediction,
};
use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::trainer::{train, TrainError, TrainRunConfig};
use crate::Label;

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_SHUFFLES: usize = 100;
pub const DEFAULT_TOP_FRACTION: f64 = 0.1;
/// Two-class confidence can never fall below 0.5.
pub const CONFIDENCE_FLOOR: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("empty population for {0}")]
    EmptyPopulation(String),
    #[error("stability needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("n_bins must be >= 1")]
    NoBins,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// One scored test candidate with its outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CasePrediction {
    pub user: u32,
    pub item: u32,
    pub true_label: Label,
    pub predicted: Label,
    /// Probability of the predicted label.
    pub confidence: f64,
    pub prob_pos: f64,
}

impl CasePrediction {
    pub fn correct(&self) -> bool {
        self.predicted == self.true_label
    }
}

/// Score every test candidate (the positive and its 99 negatives, per
/// user) against the user's train history.
pub fn collect_test_predictions<F: Scalar>(
    params: &ModelParams<F>,
    split: &SplitDataset,
) -> Result<Vec<CasePrediction>, AuditError> {
    let per_user: Vec<Vec<CasePrediction>> = (0..split.num_users as u32)
        .into_par_iter()
        .map(|user| -> Result<Vec<CasePrediction>, AuditError> {
            let predictions = metrics::score_user(params, split, user)?;
            let instance = &split.test[user as usize];
            let mut out = Vec::with_capacity(predictions.len());
            for (i, p) in predictions.iter().enumerate() {
                let (item, true_label) = if i == 0 {
                    (instance.positive_item, Label::Positive)
                } else {
                    (instance.negatives[i - 1], Label::Negative)
                };
                out.push(CasePrediction {
                    user,
                    item,
                    true_label,
                    predicted: p.predicted_label,
                    confidence: p.confidence.as_f64(),
                    prob_pos: p.prob_pos.as_f64(),
                });
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    Ok(per_user.into_iter().flatten().collect())
}

/// Population filter for reliability diagrams, by true label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    PositiveCases,
    NegativeCases,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::All, Subset::PositiveCases, Subset::NegativeCases];

    pub fn includes(self, true_label: Label) -> bool {
        match self {
            Subset::All => true,
            Subset::PositiveCases => true_label == Label::Positive,
            Subset::NegativeCases => true_label == Label::Negative,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::PositiveCases => "positive_cases",
            Subset::NegativeCases => "negative_cases",
        }
    }
}

impl std::fmt::Display for Subset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// 0 when the bin is empty.
    pub mean_confidence: f64,
    /// 0 when the bin is empty.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReliabilityDiagram {
    pub subset: Subset,
    pub bins: Vec<ReliabilityBin>,
    /// Expected calibration error: count-weighted mean |accuracy - confidence|.
    pub ece: f64,
    pub population: usize,
}

pub(crate) fn bin_bounds(index: usize, n_bins: usize) -> (f64, f64) {
    let span = 1.0 - CONFIDENCE_FLOOR;
    let lo = CONFIDENCE_FLOOR + span * (index as f64 / n_bins as f64);
    let hi = CONFIDENCE_FLOOR + span * ((index + 1) as f64 / n_bins as f64);
    (lo, hi)
}

pub(crate) fn bin_index(confidence: f64, n_bins: usize) -> usize {
    let span = 1.0 - CONFIDENCE_FLOOR;
    let raw = ((confidence - CONFIDENCE_FLOOR) / span * n_bins as f64).floor();
    (raw.max(0.0) as usize).min(n_bins - 1)
}

/// Reliability diagram over the selected subset: per-bin accuracy and mean
/// confidence, plus the expected calibration error.
pub fn reliability_diagram(
    predictions: &[CasePrediction],
    subset: Subset,
    n_bins: usize,
) -> Result<ReliabilityDiagram, AuditError> {
    if n_bins == 0 {
        return Err(AuditError::NoBins);
    }
    let mut counts = vec![0usize; n_bins];
    let mut correct = vec![0usize; n_bins];
    let mut confidence_sum = vec![0.0f64; n_bins];
    let mut population = 0usize;
    for p in predictions.iter().filter(|p| subset.includes(p.true_label)) {
        let b = bin_index(p.confidence, n_bins);
        counts[b] += 1;
        correct[b] += p.correct() as usize;
        confidence_sum[b] += p.confidence;
        population += 1;
    }
    if population == 0 {
        return Err(AuditError::EmptyPopulation(format!("subset {subset}")));
    }
    let mut bins = Vec::with_capacity(n_bins);
    let mut ece = 0.0;
    for b in 0..n_bins {
        let (lo, hi) = bin_bounds(b, n_bins);
        let (mean_confidence, accuracy) = if counts[b] > 0 {
            (
                confidence_sum[b] / counts[b] as f64,
                correct[b] as f64 / counts[b] as f64,
            )
        } else {
            (0.0, 0.0)
        };
        if counts[b] > 0 {
            ece += counts[b] as f64 / population as f64 * (accuracy - mean_confidence).abs();
        }
        bins.push(ReliabilityBin {
            lo,
            hi,
            count: counts[b],
            mean_confidence,
            accuracy,
        });
    }
    Ok(ReliabilityDiagram {
        subset,
        bins,
        ece,
        population,
    })
}

/// Case subsets reported by the permutation experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationSubset {
    All,
    FalseNegatives,
    FalsePositives,
}

impl PermutationSubset {
    pub const ALL: [PermutationSubset; 3] = [
        PermutationSubset::All,
        PermutationSubset::FalseNegatives,
        PermutationSubset::FalsePositives,
    ];

    pub fn includes(self, true_label: Label, predicted: Label) -> bool {
        match self {
            PermutationSubset::All => true,
            PermutationSubset::FalseNegatives => {
                true_label == Label::Positive && predicted == Label::Negative
            }
            PermutationSubset::FalsePositives => {
                true_label == Label::Negative && predicted == Label::Positive
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PermutationSubset::All => "all",
            PermutationSubset::FalseNegatives => "false_negatives",
            PermutationSubset::FalsePositives => "false_positives",
        }
    }
}

impl std::fmt::Display for PermutationSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PermutationCaseResult {
    pub user: u32,
    pub target_item: u32,
    pub true_label: Label,
    pub predicted_label: Label,
    /// Probability of the predicted label at baseline.
    pub confidence: f64,
    /// Baseline positive-class probability, emitted alongside so the
    /// false-negative series can also be binned by it.
    pub prob_pos: f64,
    /// Mean over shuffles of |p_base - p_shuffled| on the originally
    /// predicted label.
    pub mean_abs_delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PermutationBinStat {
    pub subset: PermutationSubset,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub mean_abs_delta: f64,
    /// Reliability overlay for the same (subset, bin) population.
    pub accuracy: f64,
    pub mean_confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PermutationReport {
    pub n_shuffles: usize,
    pub seed: u64,
    pub n_bins: usize,
    pub cases: Vec<PermutationCaseResult>,
    pub per_bin: Vec<PermutationBinStat>,
}

/// For every test candidate, shuffle the attention weights uniformly
/// `n_shuffles` times (identity permutations included) and average the
/// absolute change in the probability of the originally predicted label.
/// Each case draws from a sub-stream keyed by (seed, user, target item).
pub fn permutation_experiment<F: Scalar>(
    params: &ModelParams<F>,
    split: &SplitDataset,
    n_shuffles: usize,
    seed: u64,
    n_bins: usize,
) -> Result<PermutationReport, AuditError> {
    if n_bins == 0 {
        return Err(AuditError::NoBins);
    }
    let master = Stream::new(seed);
    let per_user: Vec<Vec<PermutationCaseResult>> = (0..split.num_users as u32)
        .into_par_iter()
        .map(|user| -> Result<Vec<PermutationCaseResult>, AuditError> {
            let history = split.train_items(user);
            let instance = &split.test[user as usize];
            let mut out = Vec::with_capacity(1 + instance.negatives.len());
            for (i, &item) in std::iter::once(&instance.positive_item)
                .chain(instance.negatives.iter())
                .enumerate()
            {
                let true_label = if i == 0 {
                    Label::Positive
                } else {
                    Label::Negative
                };
                let case = permutation_case(
                    params, &history, item, true_label, n_shuffles, &master, user,
                )?;
                out.push(case);
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let cases: Vec<PermutationCaseResult> = per_user.into_iter().flatten().collect();

    let mut per_bin = Vec::with_capacity(3 * n_bins);
    for subset in PermutationSubset::ALL {
        for b in 0..n_bins {
            let (bin_lo, bin_hi) = bin_bounds(b, n_bins);
            let mut count = 0usize;
            let mut delta_sum = 0.0;
            let mut correct = 0usize;
            let mut confidence_sum = 0.0;
            for case in cases
                .iter()
                .filter(|c| subset.includes(c.true_label, c.predicted_label))
                .filter(|c| bin_index(c.confidence, n_bins) == b)
            {
                count += 1;
                delta_sum += case.mean_abs_delta;
                correct += (case.predicted_label == case.true_label) as usize;
                confidence_sum += case.confidence;
            }
            let (mean_abs_delta, accuracy, mean_confidence) = if count > 0 {
                (
                    delta_sum / count as f64,
                    correct as f64 / count as f64,
                    confidence_sum / count as f64,
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            per_bin.push(PermutationBinStat {
                subset,
                bin_lo,
                bin_hi,
                count,
                mean_abs_delta,
                accuracy,
                mean_confidence,
            });
        }
    }
    Ok(PermutationReport {
        n_shuffles,
        seed,
        n_bins,
        cases,
        per_bin,
    })
}

fn permutation_case<F: Scalar>(
    params: &ModelParams<F>,
    history: &[u32],
    target: u32,
    true_label: Label,
    n_shuffles: usize,
    master: &Stream,
    user: u32,
) -> Result<PermutationCaseResult, AuditError> {
    let (prediction, trace) = forward(params, history, target)?;
    let predicted = prediction.predicted_label;
    let base = prediction.prob_of(predicted);
    let mut stream = master.derive("permutation-case", &[u64::from(user), u64::from(target)]);
    let mut delta_sum = 0.0;
    let mut weights = trace.att_weights.clone();
    for _ in 0..n_shuffles {
        weights.copy_from_slice(&trace.att_weights);
        stream.shuffle(&mut weights);
        let pooled = pool_interactions(&trace.interactions, &weights, params.config.alpha);
        let probs = tower_probs(params, &pooled);
        let shuffled = probs[predicted.index()];
        delta_sum += (base - shuffled).abs().as_f64();
    }
    Ok(PermutationCaseResult {
        user,
        target_item: target,
        true_label,
        predicted_label: predicted,
        confidence: prediction.confidence.as_f64(),
        prob_pos: prediction.prob_pos.as_f64(),
        mean_abs_delta: delta_sum / n_shuffles as f64,
    })
}

/// The `ceil(fraction * L)` history items with the largest attention
/// weights (at least one); weight ties break by ascending item id.
pub fn top_attentive<F: Scalar>(
    attention: &AttentionDistribution<F>,
    history: &[u32],
    fraction: f64,
) -> BTreeSet<u32> {
    assert_eq!(
        attention.weights.len(),
        history.len(),
        "attention must align with history"
    );
    assert!(!history.is_empty(), "history must be non-empty");
    let k = ((fraction * history.len() as f64).ceil() as usize).clamp(1, history.len());
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| {
        attention.weights[b]
            .partial_cmp(&attention.weights[a])
            .expect("attention weights are finite")
            .then(history[a].cmp(&history[b]))
    });
    order[..k].iter().map(|&i| history[i]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityCaseResult {
    pub user: u32,
    pub target_item: u32,
    /// Mean Jaccard index over all run pairs of the top-attentive sets.
    pub mean_pairwise_jaccard: f64,
    /// Mean over runs of the probability of each run's predicted label.
    pub mean_confidence: f64,
    /// True when a strict majority of runs predicts the positive class.
    pub positive_majority: bool,
    pub n_runs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityBinStat {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub mean_jaccard: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub seeds: Vec<u64>,
    pub top_fraction: f64,
    pub n_bins: usize,
    pub cases: Vec<StabilityCaseResult>,
    /// Majority-positive cases bucketed by mean confidence.
    pub per_bin: Vec<StabilityBinStat>,
}

/// Train one model per seed (only the seed changes) and measure how stable
/// the top-attentive sets are per positive test case across runs.
pub fn stability_experiment<F: Scalar>(
    split: &SplitDataset,
    run_config: &TrainRunConfig,
    seeds: &[u64],
    top_fraction: f64,
    n_bins: usize,
) -> Result<StabilityReport, AuditError> {
    if seeds.len() < 2 {
        return Err(AuditError::TooFewRuns(seeds.len()));
    }
    let mut models = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut config = run_config.clone();
        config.seed = seed;
        models.push(train::<F>(split, &config)?.params);
    }
    stability_from_params(split, &models, seeds.to_vec(), top_fraction, n_bins)
}

/// Stability analysis over already-trained parameter sets (e.g. loaded
/// checkpoints).
pub fn stability_from_params<F: Scalar>(
    split: &SplitDataset,
    models: &[ModelParams<F>],
    seeds: Vec<u64>,
    top_fraction: f64,
    n_bins: usize,
) -> Result<StabilityReport, AuditError> {
    if models.len() < 2 {
        return Err(AuditError::TooFewRuns(models.len()));
    }
    if n_bins == 0 {
        return Err(AuditError::NoBins);
    }
    let cases: Vec<StabilityCaseResult> = (0..split.num_users as u32)
        .into_par_iter()
        .map(|user| -> Result<StabilityCaseResult, AuditError> {
            let history = split.train_items(user);
            let target = split.test[user as usize].positive_item;
            let mut top_sets: Vec<BTreeSet<u32>> = Vec::with_capacity(models.len());
            let mut confidence_sum = 0.0;
            let mut positive_votes = 0usize;
            for params in models {
                let (prediction, _) = forward(params, &history, target)?;
                top_sets.push(top_attentive(&prediction.attention, &history, top_fraction));
                confidence_sum += prediction.confidence.as_f64();
                positive_votes += (prediction.predicted_label == Label::Positive) as usize;
            }
            let mut jaccard_sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..top_sets.len() {
                for j in i + 1..top_sets.len() {
                    jaccard_sum += jaccard(&top_sets[i], &top_sets[j])?;
                    pairs += 1;
                }
            }
            Ok(StabilityCaseResult {
                user,
                target_item: target,
                mean_pairwise_jaccard: jaccard_sum / pairs as f64,
                mean_confidence: confidence_sum / models.len() as f64,
                positive_majority: 2 * positive_votes > models.len(),
                n_runs: models.len(),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut per_bin = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let (bin_lo, bin_hi) = bin_bounds(b, n_bins);
        let mut count = 0usize;
        let mut jaccard_sum = 0.0;
        for case in cases
            .iter()
            .filter(|c| c.positive_majority)
            .filter(|c| bin_index(c.mean_confidence, n_bins) == b)
        {
            count += 1;
            jaccard_sum += case.mean_pairwise_jaccard;
        }
        let mean_jaccard = if count > 0 {
            jaccard_sum / count as f64
        } else {
            0.0
        };
        per_bin.push(StabilityBinStat {
            bin_lo,
            bin_hi,
            count,
            mean_jaccard,
        });
    }
    Ok(StabilityReport {
        seeds,
        top_fraction,
        n_bins,
        cases,
        per_bin,
    })
}

/// Template explanation: the target is attributed to the history item with
/// the largest attention weight (ties to the lowest item id), both mapped
/// back to their raw dataset ids.
pub fn explain<F: Scalar>(
    prediction: &Prediction<F>,
    history: &[u32],
    target: u32,
    id_map: &IdMap,
) -> String {
    assert_eq!(prediction.attention.weights.len(), history.len());
    assert!(
        !history.is_empty(),
        "explain needs a non-empty attention distribution"
    );
    let mut best = 0usize;
    for j in 1..history.len() {
        let w = prediction.attention.weights[j];
        let b = prediction.attention.weights[best];
        if w > b || (w == b && history[j] < history[best]) {
            best = j;
        }
    }
    format!(
        "You are recommended to watch #{} because you watched #{}",
        id_map.raw_item(target),
        id_map.raw_item(history[best])
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        build_interactions, leave_one_out, sample_test_negatives, IdMap, RatingRecord,
    };
    use crate::model::{init_params, ModelConfig};
    use crate::tensor::Matrix;

    fn case(confidence: f64, predicted: Label, true_label: Label) -> CasePrediction {
        CasePrediction {
            user: 0,
            item: 0,
            true_label,
            predicted,
            confidence,
            prob_pos: if predicted == Label::Positive {
                confidence
            } else {
                1.0 - confidence
            },
        }
    }

    #[test]
    fn single_occupied_bin_hand_values() {
        let preds: Vec<CasePrediction> = (0..40)
            .map(|_| case(0.9, Label::Positive, Label::Positive))
            .collect();
        let diagram = reliability_diagram(&preds, Subset::All, 10).unwrap();
        assert_eq!(diagram.bins.len(), 10);
        let occupied: Vec<&ReliabilityBin> = diagram.bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(occupied.len(), 1);
        let bin = occupied[0];
        assert_eq!(bin.count, 40);
        assert!((bin.lo, bin.hi) == (0.9, 0.95) || (bin.accuracy - 1.0).abs() < 1e-12);
        assert!((bin.accuracy - 1.0).abs() < 1e-12);
        assert!((bin.mean_confidence - 0.9).abs() < 1e-12);
        assert!((diagram.ece - 0.1).abs() < 1e-12);
    }

    #[test]
    fn constant_confidence_all_correct_ece_is_exact_gap() {
        for confidence in [0.55, 0.73, 0.98, 1.0] {
            let preds: Vec<CasePrediction> = (0..100)
                .map(|_| case(confidence, Label::Negative, Label::Negative))
                .collect();
            let diagram = reliability_diagram(&preds, Subset::All, 10).unwrap();
            assert!(
                (diagram.ece - (1.0 - confidence)).abs() < 1e-12,
                "confidence {confidence}: ece {}",
                diagram.ece
            );
        }
    }

    #[test]
    fn full_confidence_lands_in_top_bin() {
        let preds = vec![case(1.0, Label::Positive, Label::Positive)];
        let diagram = reliability_diagram(&preds, Subset::All, 10).unwrap();
        assert_eq!(diagram.bins[9].count, 1);
        assert_eq!(diagram.bins[9].hi, 1.0);
    }

    #[test]
    fn bins_partition_population_and_weighted_accuracy_matches() {
        let mut stream = Stream::new(50);
        let preds: Vec<CasePrediction> = (0..5_000)
            .map(|_| {
                let confidence = stream.uniform(0.5, 1.0);
                let correct = stream.next_f64() < 0.7;
                let predicted = Label::Positive;
                let true_label = if correct {
                    Label::Positive
                } else {
                    Label::Negative
                };
                case(confidence, predicted, true_label)
            })
            .collect();
        let diagram = reliability_diagram(&preds, Subset::All, 10).unwrap();
        let total: usize = diagram.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, 5_000);
        let weighted: f64 = diagram
            .bins
            .iter()
            .map(|b| b.accuracy * b.count as f64)
            .sum::<f64>()
            / 5_000.0;
        let overall = preds.iter().filter(|p| p.correct()).count() as f64 / preds.len() as f64;
        assert!((weighted - overall).abs() < 1e-12);
    }

    #[test]
    fn calibrated_stream_has_small_ece() {
        // Correct with probability equal to confidence: ECE ~ 0 up to
        // Monte Carlo noise.
        let mut stream = Stream::new(51);
        let preds: Vec<CasePrediction> = (0..100_000)
            .map(|_| {
                let confidence = stream.uniform(0.5, 1.0);
                let correct = stream.next_f64() < confidence;
                let true_label = if correct {
                    Label::Positive
                } else {
                    Label::Negative
                };
                case(confidence, Label::Positive, true_label)
            })
            .collect();
        let diagram = reliability_diagram(&preds, Subset::All, 10).unwrap();
        assert!(diagram.ece < 0.01, "ece {}", diagram.ece);
    }

    #[test]
    fn subsets_filter_by_true_label() {
        let preds = vec![
            case(0.8, Label::Positive, Label::Positive),
            case(0.6, Label::Negative, Label::Negative),
            case(0.7, Label::Positive, Label::Negative),
        ];
        let pos = reliability_diagram(&preds, Subset::PositiveCases, 10).unwrap();
        assert_eq!(pos.population, 1);
        let neg = reliability_diagram(&preds, Subset::NegativeCases, 10).unwrap();
        assert_eq!(neg.population, 2);
        assert!(reliability_diagram(&[], Subset::All, 10).is_err());
    }

    fn tiny_split(per_user: usize, num_users: usize, num_items: usize) -> SplitDataset {
        let mut records = Vec::new();
        for u in 0..num_users as u32 {
            for k in 0..per_user as u32 {
                records.push(RatingRecord {
                    user: u,
                    item: (u * 7 + k * 3) % num_items as u32,
                    rating: 1,
                    timestamp: i64::from(k),
                });
            }
        }
        let inter = build_interactions(&records);
        let mut split = leave_one_out(&inter, IdMap::identity(inter.num_users, num_items)).unwrap();
        split.num_items = num_items;
        sample_test_negatives(&mut split, &Stream::new(4)).unwrap();
        split
    }

    fn tiny_params(seed: u64, num_items: usize) -> ModelParams<f64> {
        let config = ModelConfig {
            embedding_dim: 4,
            mlp_widths: vec![8, 4],
            attention_hidden_dim: 4,
            alpha: 0.0,
            beta: 0.8,
        };
        init_params(&config, num_items, &mut Stream::new(seed)).unwrap()
    }

    #[test]
    fn single_item_history_has_zero_delta() {
        let split = tiny_split(2, 2, 150); // train history length 1
        let params = tiny_params(9, 150);
        let report = permutation_experiment(&params, &split, 50, 7, 10).unwrap();
        assert_eq!(report.cases.len(), 200);
        assert!(report.cases.iter().all(|c| c.mean_abs_delta == 0.0));
    }

    #[test]
    fn uniform_weights_have_zero_delta() {
        // Zeroed attention net: all logits 0, all weights equal, so every
        // permutation reproduces the pooled vector bit for bit.
        let split = tiny_split(5, 2, 150);
        let mut params = tiny_params(10, 150);
        params.att_weight = Matrix::zeros(4, 4);
        params.att_bias = vec![0.0; 4];
        params.att_score = vec![0.0; 4];
        let report = permutation_experiment(&params, &split, 50, 7, 10).unwrap();
        assert!(report.cases.iter().all(|c| c.mean_abs_delta == 0.0));
    }

    #[test]
    fn deltas_stay_in_unit_interval_and_reports_are_deterministic() {
        let split = tiny_split(5, 3, 150);
        let params = tiny_params(11, 150);
        let a = permutation_experiment(&params, &split, 20, 3, 10).unwrap();
        assert!(a
            .cases
            .iter()
            .all(|c| (0.0..=1.0).contains(&c.mean_abs_delta)));
        let b = permutation_experiment(&params, &split, 20, 3, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn per_bin_rows_cover_all_subsets() {
        let split = tiny_split(5, 2, 150);
        let params = tiny_params(12, 150);
        let report = permutation_experiment(&params, &split, 10, 3, 10).unwrap();
        assert_eq!(report.per_bin.len(), 30);
        for subset in PermutationSubset::ALL {
            let count: usize = report
                .per_bin
                .iter()
                .filter(|b| b.subset == subset)
                .map(|b| b.count)
                .sum();
            let expect = report
                .cases
                .iter()
                .filter(|c| subset.includes(c.true_label, c.predicted_label))
                .count();
            assert_eq!(count, expect, "{subset}");
        }
    }

    #[test]
    fn top_attentive_counts_and_ties() {
        let history: Vec<u32> = (0..20).collect();
        let mut weights = vec![0.01; 20];
        weights[4] = 0.9;
        weights[17] = 0.8;
        let attention = AttentionDistribution { weights, beta: 1.0 };
        let top = top_attentive(&attention, &history, 0.1);
        assert_eq!(top, BTreeSet::from([4, 17]));

        let history: Vec<u32> = (0..5).collect();
        let attention = AttentionDistribution {
            weights: vec![0.3; 5],
            beta: 1.0,
        };
        let top = top_attentive(&attention, &history, 0.1);
        assert_eq!(top, BTreeSet::from([0]), "ceil(0.5) = 1, tie to lowest id");

        let history = vec![9, 3, 6];
        let attention = AttentionDistribution {
            weights: vec![0.5; 3],
            beta: 1.0,
        };
        let top = top_attentive(&attention, &history, 0.1);
        assert_eq!(top, BTreeSet::from([3]));
    }

    #[test]
    fn stability_hand_case() {
        // Top sets {1,2}, {1,2}, {1,3}: pairwise (1, 1/3, 1/3), mean 5/9.
        let sets = [
            BTreeSet::from([1u32, 2]),
            BTreeSet::from([1u32, 2]),
            BTreeSet::from([1u32, 3]),
        ];
        let mut sum = 0.0;
        let mut pairs = 0;
        for i in 0..3 {
            for j in i + 1..3 {
                sum += jaccard(&sets[i], &sets[j]).unwrap();
                pairs += 1;
            }
        }
        assert_eq!(pairs, 3);
        assert!((sum / 3.0 - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn stability_identical_models_give_jaccard_one() {
        let split = tiny_split(6, 3, 150);
        let params = tiny_params(13, 150);
        let models = vec![params.clone(), params.clone(), params];
        let report = stability_from_params(&split, &models, vec![1, 1, 1], 0.1, 10).unwrap();
        assert_eq!(report.cases.len(), 3);
        for case in &report.cases {
            assert_eq!(case.mean_pairwise_jaccard, 1.0);
            assert_eq!(case.n_runs, 3);
        }
    }

    #[test]
    fn stability_requires_two_runs() {
        let split = tiny_split(6, 2, 150);
        let params = tiny_params(14, 150);
        let err = stability_from_params(&split, &[params], vec![1], 0.1, 10).unwrap_err();
        assert!(matches!(err, AuditError::TooFewRuns(1)));
    }

    #[test]
    fn explain_uses_argmax_and_raw_ids() {
        let id_map = IdMap {
            users: vec![100],
            items: vec![1254, 7, 1525],
        };
        let prediction = Prediction {
            prob_neg: 0.2,
            prob_pos: 0.8,
            predicted_label: Label::Positive,
            confidence: 0.8,
            attention: AttentionDistribution {
                weights: vec![0.9, 0.1],
                beta: 0.8,
            },
        };
        let text = explain(&prediction, &[0, 1], 2, &id_map);
        assert_eq!(
            text,
            "You are recommended to watch #1525 because you watched #1254"
        );
    }

    #[test]
    fn explain_single_item_and_tie_rules() {
        let id_map = IdMap::identity(1, 10);
        let prediction = Prediction {
            prob_neg: 0.5,
            prob_pos: 0.5,
            predicted_label: Label::Negative,
            confidence: 0.5,
            attention: AttentionDistribution {
                weights: vec![1.0],
                beta: 0.8,
            },
        };
        assert_eq!(
            explain(&prediction, &[3], 5, &id_map),
            "You are recommended to watch #5 because you watched #3"
        );

        let prediction = Prediction {
            attention: AttentionDistribution {
                weights: vec![0.25; 4],
                beta: 0.8,
            },
            ..prediction
        };
        assert_eq!(
            explain(&prediction, &[8, 2, 6, 4], 9, &id_map),
            "You are recommended to watch #9 because you watched #2"
        );
    }
}
