//! Hand-rolled argument parsing: a small flag surface, exact control over
//! exit codes, and no parsing dependencies in the manifest chain.

use std::path::PathBuf;

use crate::commands::{
    CalibrationOpts, EvaluateOpts, PermuteOpts, PrepareOpts, StabilityOpts, TrainOpts,
};
use crate::config::{parse_widths, ConfigOverrides};
use crate::error::CliError;

pub const USAGE: &str = "\
atnaudit: train and audit an attention-based implicit-feedback recommender

USAGE:
  atnaudit prepare  --ratings <file> --out <dir> [--seed N] [--max-users N]
  atnaudit train    --split <dir> --out <checkpoint> [--config <file>] [--seed N]
                    [--epochs N] [--batch-size N] [--neg-ratio N] [--learning-rate X]
                    [--class-weighting] [--eval-every N] [--embedding-dim N]
                    [--mlp-widths a,b,c] [--attention-hidden-dim N] [--alpha X] [--beta X]
                    [--threads N]
  atnaudit evaluate --checkpoint <file> --split <dir> [--out <file>]
                    [--explain <user> <item>] [--threads N]
  atnaudit audit calibration --checkpoint <file> --split <dir> --out <dir>
                    [--bins N] [--svg] [--threads N]
  atnaudit audit permute     --checkpoint <file> --split <dir> --out <dir>
                    [--shuffles N] [--seed N] [--bins N] [--svg] [--threads N]
  atnaudit audit stability   --split <dir> --out <dir> [--seeds N] [--seed N]
                    [--config <file>] [--checkpoints f1,f2,...] [--top-fraction X]
                    [--bins N] [--svg] [--epochs N and other train flags] [--threads N]

Exit codes: 0 success, 1 validation/config error, 2 I/O error, 3 numeric abort.
The ATNAUDIT_THREADS environment variable provides the default for --threads.
";

pub enum Command {
    Prepare(PrepareOpts),
    Train(TrainOpts),
    Evaluate(EvaluateOpts),
    Calibration(CalibrationOpts),
    Permute(PermuteOpts),
    Stability(StabilityOpts),
    Help,
}

pub struct Parsed {
    pub command: Command,
    pub threads: Option<usize>,
}

struct Flags {
    tokens: Vec<String>,
    pos: usize,
}

impl Flags {
    fn next_flag(&mut self) -> Option<String> {
        if self.pos < self.tokens.len() {
            let t = self.tokens[self.pos].clone();
            self.pos += 1;
            Some(t)
        } else {
            None
        }
    }

    fn value(&mut self, flag: &str) -> Result<String, CliError> {
        if self.pos < self.tokens.len() {
            let t = self.tokens[self.pos].clone();
            self.pos += 1;
            Ok(t)
        } else {
            Err(CliError::Validation(format!("{flag} expects a value")))
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, flag: &str) -> Result<T, CliError> {
        let v = self.value(flag)?;
        v.parse()
            .map_err(|_| CliError::Validation(format!("{flag}: bad value {v:?}")))
    }
}

fn unknown(flag: &str, command: &str) -> CliError {
    CliError::Validation(format!("unknown flag {flag:?} for {command} (try --help)"))
}

fn required<T>(value: Option<T>, flag: &str, command: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Validation(format!("{command} requires {flag}")))
}

pub fn parse(args: Vec<String>) -> Result<Parsed, CliError> {
    let mut args = args.into_iter();
    let Some(command) = args.next() else {
        return Ok(Parsed {
            command: Command::Help,
            threads: None,
        });
    };
    let mut flags = Flags {
        tokens: args.collect(),
        pos: 0,
    };
    let mut threads: Option<usize> = None;

    let command = match command.as_str() {
        "--help" | "-h" | "help" => Command::Help,
        "prepare" => {
            let mut ratings = None;
            let mut out = None;
            let mut seed = 42u64;
            let mut max_users = None;
            while let Some(flag) = flags.next_flag() {
                match flag.as_str() {
                    "--ratings" => ratings = Some(PathBuf::from(flags.value(&flag)?)),
                    "--out" => out = Some(PathBuf::from(flags.value(&flag)?)),
                    "--seed" => seed = flags.parsed(&flag)?,
                    "--max-users" => max_users = Some(flags.parsed(&flag)?),
                    "--threads" => threads = Some(flags.parsed(&flag)?),
                    _ => return Err(unknown(&flag, "prepare")),
                }
            }
            Command::Prepare(PrepareOpts {
                ratings: required(ratings, "--ratings", "prepare")?,
                out_dir: required(out, "--out", "prepare")?,
                seed,
                max_users,
            })
        }
        "train" => {
            let mut split = None;
            let mut out = None;
            let mut config = None;
            let mut seed = 42u64;
            let mut overrides = ConfigOverrides::default();
            while let Some(flag) = flags.next_flag() {
                if !train_flag(&flag, &mut flags, &mut overrides)? {
                    match flag.as_str() {
                        "--split" => split = Some(PathBuf::from(flags.value(&flag)?)),
                        "--out" => out = Some(PathBuf::from(flags.value(&flag)?)),
                        "--config" => config = Some(PathBuf::from(flags.value(&flag)?)),
                        "--seed" => seed = flags.parsed(&flag)?,
                        "--threads" => threads = Some(flags.parsed(&flag)?),
                        _ => return Err(unknown(&flag, "train")),
                    }
                }
            }
            Command::Train(TrainOpts {
                split_dir: required(split, "--split", "train")?,
                out_checkpoint: required(out, "--out", "train")?,
                config_path: config,
                seed,
                overrides,
            })
        }
        "evaluate" => {
            let mut checkpoint = None;
            let mut split = None;
            let mut out = PathBuf::from("eval.json");
            let mut explain = None;
            while let Some(flag) = flags.next_flag() {
                match flag.as_str() {
                    "--checkpoint" => checkpoint = Some(PathBuf::from(flags.value(&flag)?)),
                    "--split" => split = Some(PathBuf::from(flags.value(&flag)?)),
                    "--out" => out = PathBuf::from(flags.value(&flag)?),
                    "--explain" => {
                        let user = flags.parsed(&flag)?;
                        let item = flags.parsed(&flag)?;
                        explain = Some((user, item));
                    }
                    "--threads" => threads = Some(flags.parsed(&flag)?),
                    _ => return Err(unknown(&flag, "evaluate")),
                }
            }
            Command::Evaluate(EvaluateOpts {
                checkpoint: required(checkpoint, "--checkpoint", "evaluate")?,
                split_dir: required(split, "--split", "evaluate")?,
                out,
                explain,
            })
        }
        "audit" => {
            let kind = flags.next_flag().ok_or_else(|| {
                CliError::Validation("audit expects a kind: calibration|permute|stability".into())
            })?;
            match kind.as_str() {
                "calibration" => {
                    let mut checkpoint = None;
                    let mut split = None;
                    let mut out = None;
                    let mut bins = 10usize;
                    let mut svg = false;
                    while let Some(flag) = flags.next_flag() {
                        match flag.as_str() {
                            "--checkpoint" => checkpoint = Some(PathBuf::from(flags.value(&flag)?)),
                            "--split" => split = Some(PathBuf::from(flags.value(&flag)?)),
                            "--out" => out = Some(PathBuf::from(flags.value(&flag)?)),
                            "--bins" => bins = flags.parsed(&flag)?,
                            "--svg" => svg = true,
                            "--threads" => threads = Some(flags.parsed(&flag)?),
                            _ => return Err(unknown(&flag, "audit calibration")),
                        }
                    }
                    Command::Calibration(CalibrationOpts {
                        checkpoint: required(checkpoint, "--checkpoint", "audit calibration")?,
                        split_dir: required(split, "--split", "audit calibration")?,
                        out_dir: required(out, "--out", "audit calibration")?,
                        bins,
                        svg,
                    })
                }
                "permute" => {
                    let mut checkpoint = None;
                    let mut split = None;
                    let mut out = None;
                    let mut shuffles = 100usize;
                    let mut seed = 42u64;
                    let mut bins = 10usize;
                    let mut svg = false;
                    while let Some(flag) = flags.next_flag() {
                        match flag.as_str() {
                            "--checkpoint" => checkpoint = Some(PathBuf::from(flags.value(&flag)?)),
                            "--split" => split = Some(PathBuf::from(flags.value(&flag)?)),
                            "--out" => out = Some(PathBuf::from(flags.value(&flag)?)),
                            "--shuffles" => shuffles = flags.parsed(&flag)?,
                            "--seed" => seed = flags.parsed(&flag)?,
                            "--bins" => bins = flags.parsed(&flag)?,
                            "--svg" => svg = true,
                            "--threads" => threads = Some(flags.parsed(&flag)?),
                            _ => return Err(unknown(&flag, "audit permute")),
                        }
                    }
                    Command::Permute(PermuteOpts {
                        checkpoint: required(checkpoint, "--checkpoint", "audit permute")?,
                        split_dir: required(split, "--split", "audit permute")?,
                        out_dir: required(out, "--out", "audit permute")?,
                        shuffles,
                        seed,
                        bins,
                        svg,
                    })
                }
                "stability" => {
                    let mut split = None;
                    let mut out = None;
                    let mut seeds = 10usize;
                    let mut seed = 42u64;
                    let mut config = None;
                    let mut checkpoints = Vec::new();
                    let mut top_fraction = 0.1f64;
                    let mut bins = 10usize;
                    let mut svg = false;
                    let mut overrides = ConfigOverrides::default();
                    while let Some(flag) = flags.next_flag() {
                        if !train_flag(&flag, &mut flags, &mut overrides)? {
                            match flag.as_str() {
                                "--split" => split = Some(PathBuf::from(flags.value(&flag)?)),
                                "--out" => out = Some(PathBuf::from(flags.value(&flag)?)),
                                "--seeds" => seeds = flags.parsed(&flag)?,
                                "--seed" => seed = flags.parsed(&flag)?,
                                "--config" => config = Some(PathBuf::from(flags.value(&flag)?)),
                                "--checkpoints" => {
                                    checkpoints =
                                        flags.value(&flag)?.split(',').map(PathBuf::from).collect();
                                }
                                "--top-fraction" => top_fraction = flags.parsed(&flag)?,
                                "--bins" => bins = flags.parsed(&flag)?,
                                "--svg" => svg = true,
                                "--threads" => threads = Some(flags.parsed(&flag)?),
                                _ => return Err(unknown(&flag, "audit stability")),
                            }
                        }
                    }
                    Command::Stability(StabilityOpts {
                        split_dir: required(split, "--split", "audit stability")?,
                        out_dir: required(out, "--out", "audit stability")?,
                        seeds,
                        seed,
                        config_path: config,
                        overrides,
                        checkpoints,
                        top_fraction,
                        bins,
                        svg,
                    })
                }
                other => {
                    return Err(CliError::Validation(format!(
                        "unknown audit kind {other:?} (expected calibration|permute|stability)"
                    )))
                }
            }
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown command {other:?} (try --help)"
            )))
        }
    };
    Ok(Parsed { command, threads })
}

/// Shared model/optimizer flags; returns true when the flag was consumed.
fn train_flag(
    flag: &str,
    flags: &mut Flags,
    overrides: &mut ConfigOverrides,
) -> Result<bool, CliError> {
    match flag {
        "--epochs" => overrides.epochs = Some(flags.parsed(flag)?),
        "--batch-size" => overrides.batch_size = Some(flags.parsed(flag)?),
        "--neg-ratio" => overrides.neg_ratio = Some(flags.parsed(flag)?),
        "--learning-rate" => overrides.learning_rate = Some(flags.parsed(flag)?),
        "--class-weighting" => overrides.class_weighting = Some(true),
        "--eval-every" => overrides.eval_every = Some(flags.parsed(flag)?),
        "--embedding-dim" => overrides.embedding_dim = Some(flags.parsed(flag)?),
        "--mlp-widths" => overrides.mlp_widths = Some(parse_widths(&flags.value(flag)?)?),
        "--attention-hidden-dim" => overrides.attention_hidden_dim = Some(flags.parsed(flag)?),
        "--alpha" => overrides.alpha = Some(flags.parsed(flag)?),
        "--beta" => overrides.beta = Some(flags.parsed(flag)?),
        _ => return Ok(false),
    }
    Ok(true)
}
