//! Cross-module pipeline checks: corpus -> trainer -> metrics -> audit,
//! including the determinism contract and the f32 instantiation.

use std::io::Cursor;

use atnaudit_core::audit::{
    collect_test_predictions, permutation_experiment, reliability_diagram, Subset,
};
use atnaudit_core::corpus::{
    build_interactions, leave_one_out, parse_ratings, sample_test_negatives, SplitDataset,
};
use atnaudit_core::metrics::evaluate;
use atnaudit_core::model::ModelConfig;
use atnaudit_core::rng::Stream;
use atnaudit_core::trainer::{load_checkpoint, save_checkpoint, train, TrainRunConfig};

/// Synthetic MovieLens-format rating log with clustered preferences.
fn synthetic_ratings(num_users: usize, num_items: usize, per_user: usize, seed: u64) -> String {
    let clusters = 5;
    let mut stream = Stream::new(seed);
    let mut out = String::new();
    for u in 0..num_users {
        let cluster = u % clusters;
        let cluster_lo = cluster * num_items / clusters;
        let cluster_hi = (cluster + 1) * num_items / clusters;
        let mut seen = std::collections::HashSet::new();
        let mut t = 0i64;
        while seen.len() < per_user {
            let item = if stream.next_f64() < 0.9 {
                cluster_lo as u64 + stream.below((cluster_hi - cluster_lo) as u64)
            } else {
                stream.below(num_items as u64)
            };
            if !seen.insert(item) {
                continue;
            }
            t += 1 + stream.below(5) as i64;
            let rating = 1 + stream.below(5);
            out.push_str(&format!("{}::{}::{}::{}\n", u + 1, item + 1, rating, t));
        }
    }
    out
}

fn prepared_split(num_users: usize, num_items: usize, per_user: usize, seed: u64) -> SplitDataset {
    let text = synthetic_ratings(num_users, num_items, per_user, seed);
    let (records, id_map) = parse_ratings(Cursor::new(text)).unwrap();
    let interactions = build_interactions(&records);
    let mut split = leave_one_out(&interactions, id_map).unwrap();
    sample_test_negatives(&mut split, &Stream::new(seed)).unwrap();
    split
}

fn small_run(seed: u64, epochs: usize) -> TrainRunConfig {
    TrainRunConfig {
        seed,
        epochs,
        batch_size: 64,
        neg_ratio: 4,
        learning_rate: 0.01,
        class_weighting: false,
        model: ModelConfig {
            embedding_dim: 8,
            mlp_widths: vec![16, 8],
            attention_hidden_dim: 8,
            alpha: 0.0,
            beta: 0.8,
        },
        eval_every: 1,
    }
}

#[test]
fn end_to_end_run_is_reproducible() {
    let split_a = prepared_split(30, 400, 12, 7);
    let split_b = prepared_split(30, 400, 12, 7);
    assert_eq!(split_a, split_b);

    let model_a = train::<f64>(&split_a, &small_run(3, 2)).unwrap();
    let model_b = train::<f64>(&split_b, &small_run(3, 2)).unwrap();
    assert_eq!(model_a, model_b);

    let report_a = permutation_experiment(&model_a.params, &split_a, 10, 5, 10).unwrap();
    let report_b = permutation_experiment(&model_b.params, &split_b, 10, 5, 10).unwrap();
    assert_eq!(report_a, report_b);
}

#[test]
fn evaluation_survives_checkpoint_round_trip() {
    let split = prepared_split(20, 400, 10, 11);
    let trained = train::<f64>(&split, &small_run(9, 2)).unwrap();
    let before = evaluate(&trained.params, &split).unwrap();

    let path = std::env::temp_dir().join(format!("atnaudit-pipeline-{}.ckpt", std::process::id()));
    save_checkpoint(&trained, &path).unwrap();
    let loaded = load_checkpoint::<f64>(&path).unwrap();
    std::fs::remove_file(&path).unwrap();

    let after = evaluate(&loaded.params, &split).unwrap();
    assert_eq!(before, after);
}

#[test]
fn calibration_runs_over_all_subsets() {
    let split = prepared_split(20, 400, 10, 13);
    let trained = train::<f64>(&split, &small_run(2, 1)).unwrap();
    let predictions = collect_test_predictions(&trained.params, &split).unwrap();
    assert_eq!(predictions.len(), 20 * 100);
    for subset in Subset::ALL {
        let diagram = reliability_diagram(&predictions, subset, 10).unwrap();
        assert_eq!(diagram.bins.len(), 10);
        let total: usize = diagram.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, diagram.population);
    }
}

#[test]
fn f32_lane_trains_and_evaluates() {
    let split = prepared_split(20, 400, 10, 13);
    let trained = train::<f32>(&split, &small_run(4, 1)).unwrap();
    assert!(trained.params.all_finite());
    let report = evaluate(&trained.params, &split).unwrap();
    assert!(report.hr_at_10 >= 0.0 && report.hr_at_10 <= 1.0);
}
