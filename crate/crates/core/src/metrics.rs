//! Ranking metrics (HR@10, NDCG@10), per-class binary accuracy over the
//! 1-positive / 99-negative test protocol, and the Jaccard index.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SplitDataset;
use crate::model::{forward, ModelError, ModelParams, Prediction};
use crate::scalar::Scalar;
use crate::Label;

/// Each test case ranks 1 positive against 99 negatives.
pub const CANDIDATES_PER_TEST: usize = 100;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("expected {expected} candidates, got {got}")]
    CandidateCount { expected: usize, got: usize },
    #[error("positive index {index} out of range for {len} candidates")]
    BadPositiveIndex { index: usize, len: usize },
    #[error("jaccard of two empty sets is undefined")]
    EmptySets,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// 1-based rank of the positive among its 100 candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankResult {
    pub rank: usize,
}

/// Rank by score descending; ties are broken by item id ascending, so a
/// tied candidate with a smaller id ranks ahead of the positive.
pub fn rank_positive<F: Scalar>(
    scores: &[F],
    item_ids: &[u32],
    positive_index: usize,
) -> Result<RankResult, MetricsError> {
    if scores.len() != CANDIDATES_PER_TEST || item_ids.len() != CANDIDATES_PER_TEST {
        return Err(MetricsError::CandidateCount {
            expected: CANDIDATES_PER_TEST,
            got: scores.len().max(item_ids.len()),
        });
    }
    if positive_index >= scores.len() {
        return Err(MetricsError::BadPositiveIndex {
            index: positive_index,
            len: scores.len(),
        });
    }
    let positive_score = scores[positive_index];
    let positive_item = item_ids[positive_index];
    let mut rank = 1;
    for (i, (&s, &item)) in scores.iter().zip(item_ids).enumerate() {
        if i == positive_index {
            continue;
        }
        if s > positive_score || (s == positive_score && item < positive_item) {
            rank += 1;
        }
    }
    Ok(RankResult { rank })
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// Single-relevant-item NDCG: `1 / log2(rank + 1)` inside the cutoff.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        std::f64::consts::LN_2 / ((rank + 1) as f64).ln()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hr_at_10: f64,
    pub ndcg_at_10: f64,
    pub accuracy_positive: f64,
    pub accuracy_negative: f64,
    pub n_users: usize,
    pub n_predictions: usize,
}

/// Score all 100 candidates of one user against the user's train history.
/// Candidate order is the positive first, then the stored negatives.
pub(crate) fn score_user<F: Scalar>(
    params: &ModelParams<F>,
    split: &SplitDataset,
    user: u32,
) -> Result<Vec<Prediction<F>>, ModelError> {
    let history = split.train_items(user);
    let instance = &split.test[user as usize];
    let mut predictions = Vec::with_capacity(1 + instance.negatives.len());
    predictions.push(forward(params, &history, instance.positive_item)?.0);
    for &negative in &instance.negatives {
        predictions.push(forward(params, &history, negative)?.0);
    }
    Ok(predictions)
}

struct UserEval {
    hr: f64,
    ndcg: f64,
    positive_correct: bool,
    negatives_correct: usize,
    negatives_total: usize,
}

/// Evaluate a model over every test instance: HR@10 / NDCG@10 averaged over
/// users, per-class accuracy over all 100 * n_users argmax decisions.
/// Users are processed in parallel with an order-preserving merge, so the
/// report does not depend on the thread count.
pub fn evaluate<F: Scalar>(
    params: &ModelParams<F>,
    split: &SplitDataset,
) -> Result<EvalReport, MetricsError> {
    let per_user: Vec<UserEval> = (0..split.num_users as u32)
        .into_par_iter()
        .map(|user| -> Result<UserEval, MetricsError> {
            let predictions = score_user(params, split, user)?;
            let instance = &split.test[user as usize];
            let scores: Vec<F> = predictions.iter().map(|p| p.prob_pos).collect();
            let mut item_ids = Vec::with_capacity(predictions.len());
            item_ids.push(instance.positive_item);
            item_ids.extend_from_slice(&instance.negatives);
            let rank = rank_positive(&scores, &item_ids, 0)?.rank;
            Ok(UserEval {
                hr: hr_at_k(rank, 10),
                ndcg: ndcg_at_k(rank, 10),
                positive_correct: predictions[0].predicted_label == Label::Positive,
                negatives_correct: predictions[1..]
                    .iter()
                    .filter(|p| p.predicted_label == Label::Negative)
                    .count(),
                negatives_total: predictions.len() - 1,
            })
        })
        .collect::<Result<_, _>>()?;

    let n_users = per_user.len();
    let mut hr_sum = 0.0;
    let mut ndcg_sum = 0.0;
    let mut positives_correct = 0usize;
    let mut negatives_correct = 0usize;
    let mut negatives_total = 0usize;
    for u in &per_user {
        hr_sum += u.hr;
        ndcg_sum += u.ndcg;
        positives_correct += u.positive_correct as usize;
        negatives_correct += u.negatives_correct;
        negatives_total += u.negatives_total;
    }
    Ok(EvalReport {
        hr_at_10: hr_sum / n_users as f64,
        ndcg_at_10: ndcg_sum / n_users as f64,
        accuracy_positive: positives_correct as f64 / n_users as f64,
        accuracy_negative: negatives_correct as f64 / negatives_total as f64,
        n_users,
        n_predictions: n_users + negatives_total,
    })
}

/// `|A intersect B| / |A union B|`; undefined when both sets are empty.
pub fn jaccard(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> Result<f64, MetricsError> {
    if a.is_empty() && b.is_empty() {
        return Err(MetricsError::EmptySets);
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    Ok(intersection as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn candidates(n: usize) -> Vec<u32> {
        (0..n as u32).collect()
    }

    #[test]
    fn unique_max_ranks_first() {
        let mut scores = vec![0.1; 100];
        scores[42] = 0.9;
        let rank = rank_positive(&scores, &candidates(100), 42).unwrap();
        assert_eq!(rank, RankResult { rank: 1 });
    }

    #[test]
    fn unique_min_ranks_last() {
        let mut scores = vec![0.5; 100];
        scores[7] = 0.0;
        let rank = rank_positive(&scores, &candidates(100), 7).unwrap();
        assert_eq!(rank.rank, 100);
    }

    #[test]
    fn tie_with_lower_id_negative_gives_rank_two() {
        // Positive at index 5 (item 5) ties with item 0 only; everything
        // else scores lower.
        let mut scores = vec![0.0; 100];
        scores[5] = 0.8;
        scores[0] = 0.8;
        let rank = rank_positive(&scores, &candidates(100), 5).unwrap();
        assert_eq!(rank.rank, 2);
    }

    #[test]
    fn wrong_candidate_count_is_an_error() {
        let err = rank_positive(&[0.0; 99], &candidates(99), 0).unwrap_err();
        assert!(matches!(err, MetricsError::CandidateCount { got: 99, .. }));
    }

    #[test]
    fn hr_and_ndcg_values() {
        assert_eq!(hr_at_k(1, 10), 1.0);
        assert_eq!(ndcg_at_k(1, 10), 1.0);
        assert!((ndcg_at_k(3, 10) - 0.5).abs() < 1e-12);
        assert_eq!(hr_at_k(10, 10), 1.0);
        assert_eq!(hr_at_k(11, 10), 0.0);
        assert_eq!(ndcg_at_k(11, 10), 0.0);
    }

    #[test]
    fn ndcg_never_exceeds_hr() {
        for rank in 1..=100 {
            let hr = hr_at_k(rank, 10);
            let ndcg = ndcg_at_k(rank, 10);
            assert!(ndcg <= hr + 1e-15);
            assert_eq!(ndcg == 1.0 && hr == 1.0, rank == 1);
        }
    }

    /// Brute-force oracle: fully sort candidates by (score desc, item asc)
    /// and report the positive's position.
    fn oracle_rank(scores: &[f64], item_ids: &[u32], positive_index: usize) -> usize {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then(item_ids[a].cmp(&item_ids[b]))
        });
        order.iter().position(|&i| i == positive_index).unwrap() + 1
    }

    #[test]
    fn rank_matches_full_sort_oracle_with_ties() {
        let mut stream = Stream::new(77);
        for _ in 0..2_000 {
            // Quantized scores force plenty of ties.
            let scores: Vec<f64> = (0..100).map(|_| (stream.below(8) as f64) / 8.0).collect();
            let mut item_ids: Vec<u32> = (0..100).collect();
            stream.shuffle(&mut item_ids);
            let positive_index = stream.below(100) as usize;
            let fast = rank_positive(&scores, &item_ids, positive_index)
                .unwrap()
                .rank;
            let slow = oracle_rank(&scores, &item_ids, positive_index);
            assert_eq!(fast, slow);
        }
    }

    fn set(items: &[u32]) -> BTreeSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn jaccard_hand_values() {
        assert_eq!(jaccard(&set(&[1, 2, 3]), &set(&[1, 2, 3])).unwrap(), 1.0);
        assert_eq!(jaccard(&set(&[1, 2]), &set(&[3, 4])).unwrap(), 0.0);
        assert_eq!(jaccard(&set(&[1, 2, 3]), &set(&[2, 3, 4])).unwrap(), 0.5);
        assert!(matches!(
            jaccard(&set(&[]), &set(&[])),
            Err(MetricsError::EmptySets)
        ));
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded() {
        let mut stream = Stream::new(3);
        for _ in 0..500 {
            let a: BTreeSet<u32> = (0..stream.below(10))
                .map(|_| stream.below(20) as u32)
                .collect();
            let b: BTreeSet<u32> = (0..stream.below(10))
                .map(|_| stream.below(20) as u32)
                .collect();
            if a.is_empty() && b.is_empty() {
                continue;
            }
            let ab = jaccard(&a, &b).unwrap();
            assert_eq!(ab, jaccard(&b, &a).unwrap());
            assert!((0.0..=1.0).contains(&ab));
        }
    }
}
