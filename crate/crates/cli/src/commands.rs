//! Command implementations behind the CLI surface.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use atnaudit_core::audit::{
    collect_test_predictions, explain, permutation_experiment, reliability_diagram,
    stability_experiment, stability_from_params, PermutationSubset, StabilityReport, Subset,
};
use atnaudit_core::corpus::{
    build_interactions, leave_one_out, parse_ratings, read_split, sample_test_negatives,
    write_split, IdMap, RatingRecord, SplitDataset,
};
use atnaudit_core::metrics::evaluate;
use atnaudit_core::model::forward;
use atnaudit_core::rng::Stream;
use atnaudit_core::trainer::{load_checkpoint, save_checkpoint, train, TrainRunConfig};
use atnaudit_core::{ModelParams, TrainedModel};

use crate::config::{resolve_run_config, ConfigOverrides};
use crate::error::CliError;
use crate::manifest::ManifestBuilder;
use crate::report::{
    calibration_csv, permutation_csv, stability_csv, write_json, write_text, CalibrationReport,
};
use crate::svg::{identity_series, line_plot, Series};

const SPLIT_FILES: [&str; 4] = ["train.rating", "test.rating", "test.negative", "idmap.tsv"];

/// Resolve the worker pool size: explicit flag, then `ATNAUDIT_THREADS`,
/// then the rayon default. Thread count never changes output bytes.
pub fn set_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("ATNAUDIT_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| {
                CliError::Validation(format!("ATNAUDIT_THREADS: bad thread count {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Validation("thread count must be >= 1".into()));
        }
        // Ignore the error if a global pool already exists (tests invoke
        // several commands in one process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct PrepareOpts {
    pub ratings: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub max_users: Option<usize>,
}

/// Keep only the first `max_users` users (dense-id order is first
/// appearance) and re-map items densely over the surviving records.
fn subsample_users(
    records: Vec<RatingRecord>,
    id_map: IdMap,
    max_users: usize,
) -> (Vec<RatingRecord>, IdMap) {
    if max_users >= id_map.users.len() {
        return (records, id_map);
    }
    let mut item_index: Vec<Option<u32>> = vec![None; id_map.items.len()];
    let mut items = Vec::new();
    let mut kept = Vec::new();
    for r in records {
        if (r.user as usize) < max_users {
            let new_item = *item_index[r.item as usize].get_or_insert_with(|| {
                items.push(id_map.items[r.item as usize]);
                (items.len() - 1) as u32
            });
            kept.push(RatingRecord {
                item: new_item,
                ..r
            });
        }
    }
    let users = id_map.users[..max_users].to_vec();
    (kept, IdMap { users, items })
}

pub fn cmd_prepare(opts: &PrepareOpts) -> Result<(), CliError> {
    let config = serde_json::to_value(opts)
        .map_err(|e| CliError::Validation(format!("config encoding failed: {e}")))?;
    let mut manifest = ManifestBuilder::new("prepare", config, opts.seed);
    manifest.input(&opts.ratings)?;

    let file = File::open(&opts.ratings).map_err(|e| CliError::io(&opts.ratings, e))?;
    let (mut records, mut id_map) = parse_ratings(BufReader::new(file))?;
    if let Some(max_users) = opts.max_users {
        (records, id_map) = subsample_users(records, id_map, max_users);
    }
    let interactions = build_interactions(&records);
    let mut split = leave_one_out(&interactions, id_map)?;
    sample_test_negatives(&mut split, &Stream::new(opts.seed))?;
    write_split(&split, &opts.out_dir)?;

    for name in SPLIT_FILES {
        manifest.output(&opts.out_dir.join(name));
    }
    manifest.write(&opts.out_dir.join("manifest.json"))?;
    println!(
        "prepared split: {} users, {} items, {} test instances",
        split.num_users,
        split.num_items,
        split.test.len()
    );
    Ok(())
}

fn read_split_checked(dir: &Path) -> Result<SplitDataset, CliError> {
    Ok(read_split(dir)?)
}

fn split_inputs(manifest: &mut ManifestBuilder, dir: &Path) -> Result<(), CliError> {
    for name in SPLIT_FILES {
        manifest.input(&dir.join(name))?;
    }
    Ok(())
}

/// Checkpoint sibling `<stem>.<suffix>` path.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainOpts {
    pub split_dir: PathBuf,
    pub out_checkpoint: PathBuf,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    #[serde(skip)]
    pub overrides: ConfigOverrides,
}

fn history_csv(model: &TrainedModel) -> String {
    let mut out = String::from("epoch,mean_loss,hr_at_10,ndcg_at_10\n");
    for row in &model.history {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.epoch, row.mean_loss, row.hr_at_10, row.ndcg_at_10
        );
    }
    out
}

pub fn cmd_train(opts: &TrainOpts) -> Result<(), CliError> {
    let run_config = resolve_run_config(opts.config_path.as_deref(), opts.seed, &opts.overrides)?;
    let config = serde_json::json!({
        "split_dir": opts.split_dir,
        "out_checkpoint": opts.out_checkpoint,
        "run_config": run_config,
    });
    let mut manifest = ManifestBuilder::new("train", config, opts.seed);
    split_inputs(&mut manifest, &opts.split_dir)?;
    if let Some(path) = &opts.config_path {
        manifest.input(path)?;
    }

    let split = read_split_checked(&opts.split_dir)?;
    let trained = train::<f64>(&split, &run_config)?;
    save_checkpoint(&trained, &opts.out_checkpoint)?;
    let history_path = sibling(&opts.out_checkpoint, "history.csv");
    write_text(&history_csv(&trained), &history_path)?;

    manifest.output(&opts.out_checkpoint);
    manifest.output(&history_path);
    manifest.write(&sibling(&opts.out_checkpoint, "manifest.json"))?;
    if let Some(last) = trained.history.last() {
        println!(
            "trained {} epochs: loss {:.6}, HR@10 {:.4}, NDCG@10 {:.4}",
            run_config.epochs, last.mean_loss, last.hr_at_10, last.ndcg_at_10
        );
    } else {
        println!(
            "trained {} epochs (no evaluation points)",
            run_config.epochs
        );
    }
    Ok(())
}

fn load_model_for(split: &SplitDataset, path: &Path) -> Result<TrainedModel, CliError> {
    let model = load_checkpoint::<f64>(path)?;
    if model.params.num_items != split.num_items {
        return Err(CliError::Validation(format!(
            "checkpoint {} was trained over {} items but the split has {}",
            path.display(),
            model.params.num_items,
            split.num_items
        )));
    }
    Ok(model)
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluateOpts {
    pub checkpoint: PathBuf,
    pub split_dir: PathBuf,
    pub out: PathBuf,
    pub explain: Option<(u64, u64)>,
}

pub fn cmd_evaluate(opts: &EvaluateOpts) -> Result<(), CliError> {
    let config = serde_json::to_value(opts)
        .map_err(|e| CliError::Validation(format!("config encoding failed: {e}")))?;
    let split = read_split_checked(&opts.split_dir)?;
    let model = load_model_for(&split, &opts.checkpoint)?;
    let mut manifest = ManifestBuilder::new("evaluate", config, model.run_config.seed);
    split_inputs(&mut manifest, &opts.split_dir)?;
    manifest.input(&opts.checkpoint)?;

    let report = evaluate(&model.params, &split)?;
    println!("HR@10              {:.4}", report.hr_at_10);
    println!("NDCG@10            {:.4}", report.ndcg_at_10);
    println!("accuracy(positive) {:.4}", report.accuracy_positive);
    println!("accuracy(negative) {:.4}", report.accuracy_negative);
    write_json(&report, &opts.out)?;
    manifest.output(&opts.out);

    if let Some((raw_user, raw_item)) = opts.explain {
        let user = split.id_map.dense_user(raw_user).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown user id {raw_user} (raw dataset id expected)"
            ))
        })?;
        let item = split.id_map.dense_item(raw_item).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown item id {raw_item} (raw dataset id expected)"
            ))
        })?;
        let history: Vec<u32> = split
            .train_items(user)
            .into_iter()
            .filter(|&i| i != item)
            .collect();
        if history.is_empty() {
            return Err(CliError::Validation(format!(
                "user {raw_user} has no other training interactions to explain with"
            )));
        }
        let (prediction, _) = forward(&model.params, &history, item)?;
        println!("{}", explain(&prediction, &history, item, &split.id_map));
    }

    manifest.write(&sibling(&opts.out, "manifest.json"))?;
    Ok(())
}

fn bin_mid(lo: f64, hi: f64) -> f64 {
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationOpts {
    pub checkpoint: PathBuf,
    pub split_dir: PathBuf,
    pub out_dir: PathBuf,
    pub bins: usize,
    pub svg: bool,
}

pub fn cmd_audit_calibration(opts: &CalibrationOpts) -> Result<(), CliError> {
    let config = serde_json::to_value(opts)
        .map_err(|e| CliError::Validation(format!("config encoding failed: {e}")))?;
    let split = read_split_checked(&opts.split_dir)?;
    let model = load_model_for(&split, &opts.checkpoint)?;
    let mut manifest = ManifestBuilder::new("audit calibration", config, model.run_config.seed);
    split_inputs(&mut manifest, &opts.split_dir)?;
    manifest.input(&opts.checkpoint)?;

    let predictions = collect_test_predictions(&model.params, &split)?;
    let mut subsets = Vec::with_capacity(3);
    for subset in Subset::ALL {
        subsets.push(reliability_diagram(&predictions, subset, opts.bins)?);
    }
    let report = CalibrationReport {
        n_bins: opts.bins,
        subsets,
    };

    std::fs::create_dir_all(&opts.out_dir).map_err(|e| CliError::io(&opts.out_dir, e))?;
    let json_path = opts.out_dir.join("calibration.json");
    let csv_path = opts.out_dir.join("calibration.csv");
    write_json(&report, &json_path)?;
    write_text(&calibration_csv(&report), &csv_path)?;
    manifest.output(&json_path);
    manifest.output(&csv_path);

    if opts.svg {
        let colors = ["#1f77b4", "#d62728", "#2ca02c"];
        let mut series = vec![identity_series()];
        for (diagram, color) in report.subsets.iter().zip(colors) {
            series.push(Series {
                name: format!("accuracy ({})", diagram.subset),
                color,
                points: diagram
                    .bins
                    .iter()
                    .filter(|b| b.count > 0)
                    .map(|b| (bin_mid(b.lo, b.hi), b.accuracy))
                    .collect(),
            });
        }
        let svg_path = opts.out_dir.join("calibration.svg");
        write_text(
            &line_plot("Reliability diagram", "confidence", &series),
            &svg_path,
        )?;
        manifest.output(&svg_path);
    }
    for diagram in &report.subsets {
        println!(
            "subset {:<15} ece {:.4} over {} predictions",
            diagram.subset.name(),
            diagram.ece,
            diagram.population
        );
    }
    manifest.write(&opts.out_dir.join("manifest.json"))?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct PermuteOpts {
    pub checkpoint: PathBuf,
    pub split_dir: PathBuf,
    pub out_dir: PathBuf,
    pub shuffles: usize,
    pub seed: u64,
    pub bins: usize,
    pub svg: bool,
}

pub fn cmd_audit_permute(opts: &PermuteOpts) -> Result<(), CliError> {
    let config = serde_json::to_value(opts)
        .map_err(|e| CliError::Validation(format!("config encoding failed: {e}")))?;
    let split = read_split_checked(&opts.split_dir)?;
    let model = load_model_for(&split, &opts.checkpoint)?;
    let mut manifest = ManifestBuilder::new("audit permute", config, opts.seed);
    split_inputs(&mut manifest, &opts.split_dir)?;
    manifest.input(&opts.checkpoint)?;

    let report =
        permutation_experiment(&model.params, &split, opts.shuffles, opts.seed, opts.bins)?;

    std::fs::create_dir_all(&opts.out_dir).map_err(|e| CliError::io(&opts.out_dir, e))?;
    let json_path = opts.out_dir.join("permutation.json");
    let csv_path = opts.out_dir.join("permutation.csv");
    write_json(&report, &json_path)?;
    write_text(&permutation_csv(&report), &csv_path)?;
    manifest.output(&json_path);
    manifest.output(&csv_path);

    if opts.svg {
        let deltas = |subset: PermutationSubset, color| Series {
            name: format!("mean |delta| ({})", subset.name()),
            color,
            points: report
                .per_bin
                .iter()
                .filter(|b| b.subset == subset && b.count > 0)
                .map(|b| (bin_mid(b.bin_lo, b.bin_hi), b.mean_abs_delta))
                .collect(),
        };
        let reliability = Series {
            name: "accuracy (all)".into(),
            color: "#1f77b4",
            points: report
                .per_bin
                .iter()
                .filter(|b| b.subset == PermutationSubset::All && b.count > 0)
                .map(|b| (bin_mid(b.bin_lo, b.bin_hi), b.accuracy))
                .collect(),
        };
        let series = vec![
            identity_series(),
            reliability,
            deltas(PermutationSubset::FalseNegatives, "#d62728"),
            deltas(PermutationSubset::FalsePositives, "#ff7f0e"),
        ];
        let svg_path = opts.out_dir.join("permutation.svg");
        write_text(
            &line_plot("Attention permutation vs confidence", "confidence", &series),
            &svg_path,
        )?;
        manifest.output(&svg_path);
    }
    let fn_cases = report
        .cases
        .iter()
        .filter(|c| PermutationSubset::FalseNegatives.includes(c.true_label, c.predicted_label))
        .count();
    println!(
        "permutation over {} cases ({} false negatives), {} shuffles",
        report.cases.len(),
        fn_cases,
        report.n_shuffles
    );
    manifest.write(&opts.out_dir.join("manifest.json"))?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityOpts {
    pub split_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Number of seeds when training internally.
    pub seeds: usize,
    pub seed: u64,
    pub config_path: Option<PathBuf>,
    #[serde(skip)]
    pub overrides: ConfigOverrides,
    /// Pre-trained checkpoints to audit instead of training internally.
    pub checkpoints: Vec<PathBuf>,
    pub top_fraction: f64,
    pub bins: usize,
    pub svg: bool,
}

pub fn cmd_audit_stability(opts: &StabilityOpts) -> Result<(), CliError> {
    let split = read_split_checked(&opts.split_dir)?;

    let report: StabilityReport = if opts.checkpoints.is_empty() {
        let run_config: TrainRunConfig =
            resolve_run_config(opts.config_path.as_deref(), opts.seed, &opts.overrides)?;
        if opts.seeds < 2 {
            return Err(CliError::Validation(format!(
                "stability needs at least 2 seeds, got {}",
                opts.seeds
            )));
        }
        let seeds: Vec<u64> = (0..opts.seeds as u64).map(|i| opts.seed + i).collect();
        stability_experiment::<f64>(&split, &run_config, &seeds, opts.top_fraction, opts.bins)?
    } else {
        let mut params: Vec<ModelParams> = Vec::with_capacity(opts.checkpoints.len());
        let mut seeds = Vec::with_capacity(opts.checkpoints.len());
        for path in &opts.checkpoints {
            let model = load_model_for(&split, path)?;
            seeds.push(model.run_config.seed);
            params.push(model.params);
        }
        stability_from_params(&split, &params, seeds, opts.top_fraction, opts.bins)?
    };

    let config = serde_json::to_value(opts)
        .map_err(|e| CliError::Validation(format!("config encoding failed: {e}")))?;
    let mut manifest = ManifestBuilder::new("audit stability", config, opts.seed);
    split_inputs(&mut manifest, &opts.split_dir)?;
    for path in &opts.checkpoints {
        manifest.input(path)?;
    }

    std::fs::create_dir_all(&opts.out_dir).map_err(|e| CliError::io(&opts.out_dir, e))?;
    let json_path = opts.out_dir.join("stability.json");
    let csv_path = opts.out_dir.join("stability.csv");
    write_json(&report, &json_path)?;
    write_text(&stability_csv(&report), &csv_path)?;
    manifest.output(&json_path);
    manifest.output(&csv_path);

    if opts.svg {
        let series = vec![Series {
            name: "mean Jaccard (positive majority)".into(),
            color: "#2ca02c",
            points: report
                .per_bin
                .iter()
                .filter(|b| b.count > 0)
                .map(|b| (bin_mid(b.bin_lo, b.bin_hi), b.mean_jaccard))
                .collect(),
        }];
        let svg_path = opts.out_dir.join("stability.svg");
        write_text(
            &line_plot(
                "Attention stability across seeds",
                "mean confidence",
                &series,
            ),
            &svg_path,
        )?;
        manifest.output(&svg_path);
    }
    let overall: f64 = if report.cases.is_empty() {
        0.0
    } else {
        report
            .cases
            .iter()
            .map(|c| c.mean_pairwise_jaccard)
            .sum::<f64>()
            / report.cases.len() as f64
    };
    println!(
        "stability over {} runs, {} cases, mean pairwise Jaccard {:.4}",
        report.seeds.len(),
        report.cases.len(),
        overall
    );
    manifest.write(&opts.out_dir.join("manifest.json"))?;
    Ok(())
}
