//! Flat `key=value` run configuration files and flag overrides.
//!
//! A config file must spell out every key; command-line flags override file
//! values, and built-in defaults apply when no file is given. This keeps the
//! resolved configuration in the manifest an exact record of the run.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use atnaudit_core::model::ModelConfig;
use atnaudit_core::trainer::TrainRunConfig;

use crate::error::CliError;

pub const CONFIG_KEYS: [&str; 10] = [
    "embedding_dim",
    "mlp_widths",
    "attention_hidden_dim",
    "alpha",
    "beta",
    "learning_rate",
    "batch_size",
    "neg_ratio",
    "epochs",
    "class_weighting",
];

/// Flag-level overrides collected from the command line.
#[derive(Clone, Debug, Default)]
pub struct ConfigOverrides {
    pub embedding_dim: Option<usize>,
    pub mlp_widths: Option<Vec<usize>>,
    pub attention_hidden_dim: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub neg_ratio: Option<usize>,
    pub epochs: Option<usize>,
    pub class_weighting: Option<bool>,
    pub eval_every: Option<usize>,
}

fn parse_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Validation(format!("config key {key}: bad count {value:?}")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Validation(format!("config key {key}: bad number {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(CliError::Validation(format!(
            "config key {key}: bad flag {value:?}"
        ))),
    }
}

pub fn parse_widths(value: &str) -> Result<Vec<usize>, CliError> {
    let widths: Result<Vec<usize>, _> = value.split(',').map(|w| w.trim().parse()).collect();
    widths.map_err(|_| CliError::Validation(format!("bad width list {value:?}")))
}

/// Read a config file into a key/value map, rejecting unknown keys and
/// requiring every known key to be present.
fn read_config_file(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Validation(format!(
                "{}:{}: expected key=value, found {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(CliError::Validation(format!(
                "{}:{}: unknown config key {key:?}",
                path.display(),
                lineno + 1
            )));
        }
        if map
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(CliError::Validation(format!(
                "{}:{}: duplicate config key {key:?}",
                path.display(),
                lineno + 1
            )));
        }
    }
    for key in CONFIG_KEYS {
        if !map.contains_key(key) {
            return Err(CliError::Validation(format!(
                "{}: missing config key {key:?}",
                path.display()
            )));
        }
    }
    Ok(map)
}

/// Resolve defaults, then the config file (if any), then flag overrides
/// into a full run configuration.
pub fn resolve_run_config(
    config_path: Option<&Path>,
    seed: u64,
    overrides: &ConfigOverrides,
) -> Result<TrainRunConfig, CliError> {
    let mut run = TrainRunConfig {
        seed,
        ..TrainRunConfig::default()
    };

    if let Some(path) = config_path {
        let map = read_config_file(path)?;
        run.model = ModelConfig {
            embedding_dim: parse_usize("embedding_dim", &map["embedding_dim"])?,
            mlp_widths: parse_widths(&map["mlp_widths"])?,
            attention_hidden_dim: parse_usize(
                "attention_hidden_dim",
                &map["attention_hidden_dim"],
            )?,
            alpha: parse_f64("alpha", &map["alpha"])?,
            beta: parse_f64("beta", &map["beta"])?,
        };
        run.learning_rate = parse_f64("learning_rate", &map["learning_rate"])?;
        run.batch_size = parse_usize("batch_size", &map["batch_size"])?;
        run.neg_ratio = parse_usize("neg_ratio", &map["neg_ratio"])?;
        run.epochs = parse_usize("epochs", &map["epochs"])?;
        run.class_weighting = parse_bool("class_weighting", &map["class_weighting"])?;
    }

    if let Some(v) = overrides.embedding_dim {
        run.model.embedding_dim = v;
        // The hidden width defaults to the embedding width unless pinned.
        if overrides.attention_hidden_dim.is_none() && config_path.is_none() {
            run.model.attention_hidden_dim = v;
        }
    }
    if let Some(v) = &overrides.mlp_widths {
        run.model.mlp_widths = v.clone();
    }
    if let Some(v) = overrides.attention_hidden_dim {
        run.model.attention_hidden_dim = v;
    }
    if let Some(v) = overrides.alpha {
        run.model.alpha = v;
    }
    if let Some(v) = overrides.beta {
        run.model.beta = v;
    }
    if let Some(v) = overrides.learning_rate {
        run.learning_rate = v;
    }
    if let Some(v) = overrides.batch_size {
        run.batch_size = v;
    }
    if let Some(v) = overrides.neg_ratio {
        run.neg_ratio = v;
    }
    if let Some(v) = overrides.epochs {
        run.epochs = v;
    }
    if let Some(v) = overrides.class_weighting {
        run.class_weighting = v;
    }
    if let Some(v) = overrides.eval_every {
        run.eval_every = v;
    }

    run.model
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(run)
}

/// Canonical `key=value` rendering of a resolved config, config-file
/// compatible.
pub fn render_config(run: &TrainRunConfig) -> String {
    let widths: Vec<String> = run.model.mlp_widths.iter().map(|w| w.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "embedding_dim={}", run.model.embedding_dim);
    let _ = writeln!(out, "mlp_widths={}", widths.join(","));
    let _ = writeln!(
        out,
        "attention_hidden_dim={}",
        run.model.attention_hidden_dim
    );
    let _ = writeln!(out, "alpha={}", run.model.alpha);
    let _ = writeln!(out, "beta={}", run.model.beta);
    let _ = writeln!(out, "learning_rate={}", run.learning_rate);
    let _ = writeln!(out, "batch_size={}", run.batch_size);
    let _ = writeln!(out, "neg_ratio={}", run.neg_ratio);
    let _ = writeln!(out, "epochs={}", run.epochs);
    let _ = writeln!(out, "class_weighting={}", run.class_weighting);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!(
            "atnaudit-config-{}-{:?}.cfg",
            std::process::id(),
            std::thread::current().id()
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        path
    }

    const FULL: &str = "embedding_dim=8\nmlp_widths=32,16,8\nattention_hidden_dim=8\n\
                        alpha=0\nbeta=0.8\nlearning_rate=0.01\nbatch_size=128\n\
                        neg_ratio=4\nepochs=5\nclass_weighting=false\n";

    #[test]
    fn full_config_file_resolves() {
        let path = write_config(FULL);
        let run = resolve_run_config(Some(&path), 7, &ConfigOverrides::default()).unwrap();
        assert_eq!(run.model.embedding_dim, 8);
        assert_eq!(run.model.mlp_widths, vec![32, 16, 8]);
        assert_eq!(run.epochs, 5);
        assert_eq!(run.seed, 7);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn missing_key_is_named() {
        let path = write_config(&FULL.replace("beta=0.8\n", ""));
        let err = resolve_run_config(Some(&path), 7, &ConfigOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("beta"), "got: {err}");
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn unknown_key_is_rejected() {
        let path = write_config(&format!("{FULL}bogus=1\n"));
        let err = resolve_run_config(Some(&path), 7, &ConfigOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "got: {err}");
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn flags_override_file_values() {
        let path = write_config(FULL);
        let overrides = ConfigOverrides {
            epochs: Some(2),
            beta: Some(1.0),
            ..Default::default()
        };
        let run = resolve_run_config(Some(&path), 7, &overrides).unwrap();
        assert_eq!(run.epochs, 2);
        assert_eq!(run.model.beta, 1.0);
        assert_eq!(run.batch_size, 128);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn defaults_apply_without_file() {
        let run = resolve_run_config(None, 3, &ConfigOverrides::default()).unwrap();
        assert_eq!(run.model.embedding_dim, 16);
        assert_eq!(run.model.mlp_widths, vec![64, 32, 16]);
        assert_eq!(run.model.beta, 0.8);
        assert_eq!(run.learning_rate, 0.01);
        assert_eq!(run.neg_ratio, 4);
    }

    #[test]
    fn rendered_config_reparses() {
        let run = resolve_run_config(None, 3, &ConfigOverrides::default()).unwrap();
        let path = write_config(&render_config(&run));
        let again = resolve_run_config(Some(&path), 3, &ConfigOverrides::default()).unwrap();
        assert_eq!(run, again);
        std::fs::remove_file(&path).unwrap();
    }
}
