//! Report bundles: each audit emits a machine-readable JSON report plus a
//! CSV plot series whose rows mirror the corresponding JSON array
//! element-for-element. Key order is struct declaration order, so report
//! bytes are stable across runs.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use atnaudit_core::audit::{PermutationReport, ReliabilityDiagram, StabilityReport};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub n_bins: usize,
    pub subsets: Vec<ReliabilityDiagram>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("report encoding failed: {e}")))?;
    std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
}

pub fn calibration_csv(report: &CalibrationReport) -> String {
    let mut out = String::from("subset,bin_lo,bin_hi,count,mean_confidence,accuracy\n");
    for diagram in &report.subsets {
        for bin in &diagram.bins {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                diagram.subset, bin.lo, bin.hi, bin.count, bin.mean_confidence, bin.accuracy
            );
        }
    }
    out
}

pub fn permutation_csv(report: &PermutationReport) -> String {
    let mut out =
        String::from("subset,bin_lo,bin_hi,count,mean_abs_delta,accuracy,mean_confidence\n");
    for row in &report.per_bin {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.subset,
            row.bin_lo,
            row.bin_hi,
            row.count,
            row.mean_abs_delta,
            row.accuracy,
            row.mean_confidence
        );
    }
    out
}

pub fn stability_csv(report: &StabilityReport) -> String {
    let mut out = String::from("bin_lo,bin_hi,count,mean_jaccard\n");
    for row in &report.per_bin {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.bin_lo, row.bin_hi, row.count, row.mean_jaccard
        );
    }
    out
}

pub fn write_text(text: &str, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
