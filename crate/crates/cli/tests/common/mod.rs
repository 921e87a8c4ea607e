//! Shared helpers for CLI integration tests: a synthetic MovieLens-format
//! corpus generator with clustered preferences, temp dirs, and binary
//! invocation.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use atnaudit_core::rng::Stream;

/// Synthetic rating log in `UserID::MovieID::Rating::Timestamp` format.
/// Users belong to item clusters; most ratings stay inside the cluster, so
/// an item-based model has structure to learn.
pub fn synthetic_ratings(
    num_users: usize,
    num_items: usize,
    per_user: usize,
    clusters: usize,
    in_cluster: f64,
    seed: u64,
) -> String {
    let mut stream = Stream::new(seed);
    let mut out = String::new();
    for u in 0..num_users {
        let cluster = u % clusters;
        let lo = cluster * num_items / clusters;
        let hi = (cluster + 1) * num_items / clusters;
        let mut seen = std::collections::HashSet::new();
        let mut t = 0i64;
        while seen.len() < per_user {
            let item = if stream.next_f64() < in_cluster {
                lo as u64 + stream.below((hi - lo) as u64)
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

pub fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "atnaudit-test-{tag}-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn write_ratings(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("ratings.dat");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_atnaudit")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "command failed (status {:?}):\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

pub fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process exited")
}

pub fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Manifest bytes with the wall-clock duration line removed.
pub fn manifest_without_duration(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.contains("duration_seconds"))
        .collect::<Vec<_>>()
        .join("\n")
}
