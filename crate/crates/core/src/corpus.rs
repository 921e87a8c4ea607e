//! Implicit-feedback dataset handling: rating-log parsing, binarization,
//! leave-one-out splitting, negative sampling and the canonical split files.
//!
//! File formats (all UTF-8, LF line endings):
//!
//! * input `ratings.dat`: `UserID::MovieID::Rating::Timestamp`, one record
//!   per line, raw ids remapped to dense 0-based indices in first-appearance
//!   order;
//! * `train.rating`: `user<TAB>item<TAB>1<TAB>timestamp`;
//! * `test.rating`: one line per user, same columns, the held-out positive;
//! * `test.negative`: one line per user: `(user,positive)` then 99
//!   tab-separated negative item ids;
//! * `idmap.tsv`: `raw_id<TAB>dense_id<TAB>{user|item}`.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::rng::Stream;
use crate::Label;

/// Test protocol: one held-out positive is ranked against this many
/// sampled negatives.
pub const TEST_NEGATIVES: usize = 99;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("user {user}: {msg}")]
    Split { user: u32, msg: String },
    #[error("user {user}: only {eligible} items never interacted with, need {needed}")]
    NegativePool {
        user: u32,
        eligible: usize,
        needed: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn parse(file: &str, line: usize, msg: impl Into<String>) -> Self {
        CorpusError::Parse {
            file: file.to_string(),
            line,
            msg: msg.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One parsed rating event, ids already remapped to dense indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RatingRecord {
    pub user: u32,
    pub item: u32,
    pub rating: u8,
    pub timestamp: i64,
}

/// Dense-index to raw-id maps, persisted with every split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdMap {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
}

impl IdMap {
    /// Identity map for synthetic corpora that never had raw ids.
    pub fn identity(num_users: usize, num_items: usize) -> Self {
        IdMap {
            users: (0..num_users as u64).collect(),
            items: (0..num_items as u64).collect(),
        }
    }

    pub fn raw_user(&self, dense: u32) -> u64 {
        self.users[dense as usize]
    }

    pub fn raw_item(&self, dense: u32) -> u64 {
        self.items[dense as usize]
    }

    pub fn dense_user(&self, raw: u64) -> Option<u32> {
        self.users.iter().position(|&r| r == raw).map(|i| i as u32)
    }

    pub fn dense_item(&self, raw: u64) -> Option<u32> {
        self.items.iter().position(|&r| r == raw).map(|i| i as u32)
    }
}

/// Binarized implicit-feedback histories.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionSet {
    pub num_users: usize,
    pub num_items: usize,
    /// Per user, `(item, timestamp)` positives sorted by timestamp
    /// ascending, ties by item id ascending. No duplicate items.
    pub histories: Vec<Vec<(u32, i64)>>,
}

/// One evaluation case: the held-out positive plus its sampled negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestInstance {
    pub user: u32,
    pub positive_item: u32,
    pub timestamp: i64,
    pub negatives: Vec<u32>,
}

/// Leave-one-out split with per-user train histories and test instances.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub num_users: usize,
    pub num_items: usize,
    /// Per user, train positives in (timestamp, item) ascending order.
    pub train: Vec<Vec<(u32, i64)>>,
    /// Exactly one instance per user, indexed by user id.
    pub test: Vec<TestInstance>,
    pub id_map: IdMap,
}

impl SplitDataset {
    /// Train history items (without timestamps) for one user.
    pub fn train_items(&self, user: u32) -> Vec<u32> {
        self.train[user as usize].iter().map(|&(i, _)| i).collect()
    }

    /// Sorted set of every positive the user ever had (train + held out).
    pub fn full_positive_set(&self, user: u32) -> Vec<u32> {
        let mut set: Vec<u32> = self.train[user as usize].iter().map(|&(i, _)| i).collect();
        set.push(self.test[user as usize].positive_item);
        set.sort_unstable();
        set
    }
}

/// A single training example for one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainExample {
    pub user: u32,
    pub item: u32,
    pub label: Label,
}

/// Parse a `UserID::MovieID::Rating::Timestamp` stream, remapping raw ids
/// to dense 0-based indices in first-appearance order.
pub fn parse_ratings(reader: impl BufRead) -> Result<(Vec<RatingRecord>, IdMap), CorpusError> {
    let file = "ratings";
    let mut user_index: HashMap<u64, u32> = HashMap::new();
    let mut item_index: HashMap<u64, u32> = HashMap::new();
    let mut id_map = IdMap {
        users: Vec::new(),
        items: Vec::new(),
    };
    let mut records = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| CorpusError::parse(file, lineno, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(CorpusError::parse(
                file,
                lineno,
                format!("expected 4 '::'-separated fields, found {}", fields.len()),
            ));
        }
        let raw_user: u64 = fields[0].parse().map_err(|_| {
            CorpusError::parse(file, lineno, format!("bad user id {:?}", fields[0]))
        })?;
        let raw_item: u64 = fields[1].parse().map_err(|_| {
            CorpusError::parse(file, lineno, format!("bad item id {:?}", fields[1]))
        })?;
        let rating: u8 = fields[2]
            .parse()
            .map_err(|_| CorpusError::parse(file, lineno, format!("bad rating {:?}", fields[2])))?;
        if !(1..=5).contains(&rating) {
            return Err(CorpusError::parse(
                file,
                lineno,
                format!("rating {rating} outside [1,5]"),
            ));
        }
        let timestamp: i64 = fields[3].parse().map_err(|_| {
            CorpusError::parse(file, lineno, format!("bad timestamp {:?}", fields[3]))
        })?;

        let user = *user_index.entry(raw_user).or_insert_with(|| {
            id_map.users.push(raw_user);
            (id_map.users.len() - 1) as u32
        });
        let item = *item_index.entry(raw_item).or_insert_with(|| {
            id_map.items.push(raw_item);
            (id_map.items.len() - 1) as u32
        });
        records.push(RatingRecord {
            user,
            item,
            rating,
            timestamp,
        });
    }
    Ok((records, id_map))
}

/// Binarize ratings to implicit feedback. Ratings of any value become
/// positives; duplicate (user, item) pairs collapse to the earliest
/// timestamp; histories come out sorted by (timestamp, item) ascending,
/// so the result does not depend on input record order.
pub fn build_interactions(records: &[RatingRecord]) -> InteractionSet {
    let num_users = records
        .iter()
        .map(|r| r.user as usize + 1)
        .max()
        .unwrap_or(0);
    let num_items = records
        .iter()
        .map(|r| r.item as usize + 1)
        .max()
        .unwrap_or(0);
    let mut histories: Vec<Vec<(u32, i64)>> = vec![Vec::new(); num_users];
    for r in records {
        histories[r.user as usize].push((r.item, r.timestamp));
    }
    for h in &mut histories {
        // Earliest timestamp wins for duplicates of the same item.
        h.sort_unstable_by_key(|&(item, ts)| (item, ts));
        h.dedup_by_key(|&mut (item, _)| item);
        h.sort_unstable_by_key(|&(item, ts)| (ts, item));
    }
    InteractionSet {
        num_users,
        num_items,
        histories,
    }
}

/// Hold out each user's latest positive (timestamp ties go to the larger
/// item id) as the test positive; the rest become the train history.
/// Negatives are left empty; fill them with [`sample_test_negatives`].
pub fn leave_one_out(
    interactions: &InteractionSet,
    id_map: IdMap,
) -> Result<SplitDataset, CorpusError> {
    let mut train = Vec::with_capacity(interactions.num_users);
    let mut test = Vec::with_capacity(interactions.num_users);
    for (user, history) in interactions.histories.iter().enumerate() {
        let user = user as u32;
        if history.len() < 2 {
            return Err(CorpusError::Split {
                user,
                msg: format!("needs at least 2 positives to split, has {}", history.len()),
            });
        }
        // Histories are (timestamp, item)-ascending, so the last entry is
        // the hold-out under both the timestamp and the tie rule.
        let (held_item, held_ts) = *history.last().unwrap();
        train.push(history[..history.len() - 1].to_vec());
        test.push(TestInstance {
            user,
            positive_item: held_item,
            timestamp: held_ts,
            negatives: Vec::new(),
        });
    }
    Ok(SplitDataset {
        num_users: interactions.num_users,
        num_items: interactions.num_items,
        train,
        test,
        id_map,
    })
}

/// Sample 99 distinct test negatives per user, uniformly from the items the
/// user never interacted with. Each user's draw comes from a sub-stream
/// keyed by the user id, so the result is independent of iteration order.
pub fn sample_test_negatives(split: &mut SplitDataset, stream: &Stream) -> Result<(), CorpusError> {
    let num_items = split.num_items;
    for user in 0..split.num_users as u32 {
        let positives = split.full_positive_set(user);
        let mut eligible: Vec<u32> = Vec::with_capacity(num_items - positives.len().min(num_items));
        for item in 0..num_items as u32 {
            if positives.binary_search(&item).is_err() {
                eligible.push(item);
            }
        }
        if eligible.len() < TEST_NEGATIVES {
            return Err(CorpusError::NegativePool {
                user,
                eligible: eligible.len(),
                needed: TEST_NEGATIVES,
            });
        }
        let mut sub = stream.derive("test-negatives", &[u64::from(user)]);
        split.test[user as usize].negatives = sub.take_distinct(&mut eligible, TEST_NEGATIVES);
    }
    Ok(())
}

/// Produce one epoch's worth of training examples: every train positive,
/// plus `neg_ratio` negatives per positive drawn uniformly from items the
/// user never interacted with. The whole list is then shuffled in place by
/// the same stream.
pub fn epoch_examples(
    split: &SplitDataset,
    neg_ratio: usize,
    stream: &mut Stream,
) -> Vec<TrainExample> {
    let num_items = split.num_items as u64;
    let mut examples = Vec::new();
    for user in 0..split.num_users as u32 {
        let positives = split.full_positive_set(user);
        debug_assert!(
            positives.len() < split.num_items,
            "user {user} interacted with every item"
        );
        for &(item, _) in &split.train[user as usize] {
            examples.push(TrainExample {
                user,
                item,
                label: Label::Positive,
            });
            for _ in 0..neg_ratio {
                let negative = loop {
                    let candidate = stream.below(num_items) as u32;
                    if positives.binary_search(&candidate).is_err() {
                        break candidate;
                    }
                };
                examples.push(TrainExample {
                    user,
                    item: negative,
                    label: Label::Negative,
                });
            }
        }
    }
    stream.shuffle(&mut examples);
    examples
}

const TRAIN_FILE: &str = "train.rating";
const TEST_FILE: &str = "test.rating";
const NEGATIVE_FILE: &str = "test.negative";
const IDMAP_FILE: &str = "idmap.tsv";

/// Write the canonical split files into `dir`.
pub fn write_split(split: &SplitDataset, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;

    let train_path = dir.join(TRAIN_FILE);
    let mut w =
        BufWriter::new(File::create(&train_path).map_err(|e| CorpusError::io(&train_path, e))?);
    for (user, history) in split.train.iter().enumerate() {
        for &(item, ts) in history {
            writeln!(w, "{user}\t{item}\t1\t{ts}").map_err(|e| CorpusError::io(&train_path, e))?;
        }
    }
    w.flush().map_err(|e| CorpusError::io(&train_path, e))?;

    let test_path = dir.join(TEST_FILE);
    let mut w =
        BufWriter::new(File::create(&test_path).map_err(|e| CorpusError::io(&test_path, e))?);
    for t in &split.test {
        writeln!(w, "{}\t{}\t1\t{}", t.user, t.positive_item, t.timestamp)
            .map_err(|e| CorpusError::io(&test_path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(&test_path, e))?;

    let neg_path = dir.join(NEGATIVE_FILE);
    let mut w = BufWriter::new(File::create(&neg_path).map_err(|e| CorpusError::io(&neg_path, e))?);
    for t in &split.test {
        write!(w, "({},{})", t.user, t.positive_item).map_err(|e| CorpusError::io(&neg_path, e))?;
        for &n in &t.negatives {
            write!(w, "\t{n}").map_err(|e| CorpusError::io(&neg_path, e))?;
        }
        writeln!(w).map_err(|e| CorpusError::io(&neg_path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(&neg_path, e))?;

    let idmap_path = dir.join(IDMAP_FILE);
    let mut w =
        BufWriter::new(File::create(&idmap_path).map_err(|e| CorpusError::io(&idmap_path, e))?);
    for (dense, raw) in split.id_map.users.iter().enumerate() {
        writeln!(w, "{raw}\t{dense}\tuser").map_err(|e| CorpusError::io(&idmap_path, e))?;
    }
    for (dense, raw) in split.id_map.items.iter().enumerate() {
        writeln!(w, "{raw}\t{dense}\titem").map_err(|e| CorpusError::io(&idmap_path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(&idmap_path, e))?;
    Ok(())
}

fn open_lines(dir: &Path, name: &str) -> Result<(String, Vec<String>), CorpusError> {
    let path = dir.join(name);
    let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        lines.push(line.map_err(|e| CorpusError::io(&path, e))?);
    }
    Ok((name.to_string(), lines))
}

fn field<T: std::str::FromStr>(
    s: &str,
    file: &str,
    line: usize,
    what: &str,
) -> Result<T, CorpusError> {
    s.parse()
        .map_err(|_| CorpusError::parse(file, line, format!("bad {what} {s:?}")))
}

/// Read a split directory written by [`write_split`]. The round trip is
/// field-exact.
pub fn read_split(dir: &Path) -> Result<SplitDataset, CorpusError> {
    let (idmap_file, idmap_lines) = open_lines(dir, IDMAP_FILE)?;
    let mut users: Vec<(usize, u64)> = Vec::new();
    let mut items: Vec<(usize, u64)> = Vec::new();
    for (i, line) in idmap_lines.iter().enumerate() {
        let lineno = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(CorpusError::parse(
                &idmap_file,
                lineno,
                "expected 3 columns",
            ));
        }
        let raw: u64 = field(cols[0], &idmap_file, lineno, "raw id")?;
        let dense: usize = field(cols[1], &idmap_file, lineno, "dense id")?;
        match cols[2] {
            "user" => users.push((dense, raw)),
            "item" => items.push((dense, raw)),
            other => {
                return Err(CorpusError::parse(
                    &idmap_file,
                    lineno,
                    format!("bad kind {other:?}"),
                ))
            }
        }
    }
    let unpack = |mut rows: Vec<(usize, u64)>, kind: &str| -> Result<Vec<u64>, CorpusError> {
        rows.sort_unstable();
        for (expect, &(dense, _)) in rows.iter().enumerate() {
            if dense != expect {
                return Err(CorpusError::parse(
                    &idmap_file,
                    0,
                    format!("{kind} dense ids are not contiguous at {dense}"),
                ));
            }
        }
        Ok(rows.into_iter().map(|(_, raw)| raw).collect())
    };
    let id_map = IdMap {
        users: unpack(users, "user")?,
        items: unpack(items, "item")?,
    };
    let num_users = id_map.users.len();
    let num_items = id_map.items.len();
    if num_users == 0 {
        return Err(CorpusError::parse(&idmap_file, 0, "no users in id map"));
    }

    let (train_file, train_lines) = open_lines(dir, TRAIN_FILE)?;
    let mut train: Vec<Vec<(u32, i64)>> = vec![Vec::new(); num_users];
    for (i, line) in train_lines.iter().enumerate() {
        let lineno = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(CorpusError::parse(
                &train_file,
                lineno,
                "expected 4 columns",
            ));
        }
        let user: u32 = field(cols[0], &train_file, lineno, "user id")?;
        let item: u32 = field(cols[1], &train_file, lineno, "item id")?;
        let ts: i64 = field(cols[3], &train_file, lineno, "timestamp")?;
        if user as usize >= num_users || item as usize >= num_items {
            return Err(CorpusError::parse(&train_file, lineno, "id outside id map"));
        }
        train[user as usize].push((item, ts));
    }
    for h in &mut train {
        h.sort_unstable_by_key(|&(item, ts)| (ts, item));
    }

    let (test_file, test_lines) = open_lines(dir, TEST_FILE)?;
    if test_lines.len() != num_users {
        return Err(CorpusError::parse(
            &test_file,
            0,
            format!(
                "expected one line per user ({num_users}), found {}",
                test_lines.len()
            ),
        ));
    }
    let mut test: Vec<Option<TestInstance>> = vec![None; num_users];
    for (i, line) in test_lines.iter().enumerate() {
        let lineno = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(CorpusError::parse(&test_file, lineno, "expected 4 columns"));
        }
        let user: u32 = field(cols[0], &test_file, lineno, "user id")?;
        let item: u32 = field(cols[1], &test_file, lineno, "item id")?;
        let ts: i64 = field(cols[3], &test_file, lineno, "timestamp")?;
        if user as usize >= num_users {
            return Err(CorpusError::parse(
                &test_file,
                lineno,
                "user outside id map",
            ));
        }
        if test[user as usize].is_some() {
            return Err(CorpusError::parse(
                &test_file,
                lineno,
                format!("duplicate user {user}"),
            ));
        }
        test[user as usize] = Some(TestInstance {
            user,
            positive_item: item,
            timestamp: ts,
            negatives: Vec::new(),
        });
    }
    let mut test: Vec<TestInstance> = test
        .into_iter()
        .enumerate()
        .map(|(user, t)| {
            t.ok_or_else(|| CorpusError::parse(&test_file, 0, format!("missing user {user}")))
        })
        .collect::<Result<_, _>>()?;

    let (neg_file, neg_lines) = open_lines(dir, NEGATIVE_FILE)?;
    if neg_lines.len() != num_users {
        return Err(CorpusError::parse(
            &neg_file,
            0,
            format!(
                "expected one line per user ({num_users}), found {}",
                neg_lines.len()
            ),
        ));
    }
    for (i, line) in neg_lines.iter().enumerate() {
        let lineno = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let head = cols[0];
        let inner = head
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| {
                CorpusError::parse(&neg_file, lineno, format!("bad case key {head:?}"))
            })?;
        let (user_s, item_s) = inner.split_once(',').ok_or_else(|| {
            CorpusError::parse(&neg_file, lineno, format!("bad case key {head:?}"))
        })?;
        let user: u32 = field(user_s, &neg_file, lineno, "user id")?;
        let item: u32 = field(item_s, &neg_file, lineno, "item id")?;
        if user as usize >= num_users {
            return Err(CorpusError::parse(&neg_file, lineno, "user outside id map"));
        }
        if test[user as usize].positive_item != item {
            return Err(CorpusError::parse(
                &neg_file,
                lineno,
                format!("positive {item} does not match test.rating"),
            ));
        }
        if cols.len() - 1 != TEST_NEGATIVES {
            return Err(CorpusError::parse(
                &neg_file,
                lineno,
                format!(
                    "expected {TEST_NEGATIVES} negatives, found {}",
                    cols.len() - 1
                ),
            ));
        }
        let mut negatives = Vec::with_capacity(TEST_NEGATIVES);
        for col in &cols[1..] {
            let n: u32 = field(col, &neg_file, lineno, "negative item id")?;
            if n as usize >= num_items {
                return Err(CorpusError::parse(
                    &neg_file,
                    lineno,
                    "negative outside id map",
                ));
            }
            negatives.push(n);
        }
        test[user as usize].negatives = negatives;
    }

    Ok(SplitDataset {
        num_users,
        num_items,
        train,
        test,
        id_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> (Vec<RatingRecord>, IdMap) {
        parse_ratings(Cursor::new(text)).unwrap()
    }

    #[test]
    fn first_ids_map_to_zero() {
        let (records, id_map) = parse("1::1193::5::978300760\n");
        assert_eq!(
            records,
            vec![RatingRecord {
                user: 0,
                item: 0,
                rating: 5,
                timestamp: 978300760
            }]
        );
        assert_eq!(id_map.users, vec![1]);
        assert_eq!(id_map.items, vec![1193]);
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let (records, id_map) = parse("");
        assert!(records.is_empty());
        assert_eq!(id_map.users.len(), 0);
        assert_eq!(build_interactions(&records).num_users, 0);
    }

    #[test]
    fn malformed_field_reports_line() {
        let err = parse_ratings(Cursor::new("1::1193::x::5\n")).unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn wrong_field_count_rejected() {
        let err = parse_ratings(Cursor::new("1::2::3\n")).unwrap_err();
        assert!(err.to_string().contains("4"));
    }

    #[test]
    fn rating_range_enforced() {
        assert!(parse_ratings(Cursor::new("1::2::9::100\n")).is_err());
    }

    #[test]
    fn ids_remap_in_first_appearance_order() {
        let (records, id_map) = parse("9::70::3::5\n4::70::1::6\n9::80::2::7\n");
        assert_eq!(id_map.users, vec![9, 4]);
        assert_eq!(id_map.items, vec![70, 80]);
        assert_eq!(records[1].user, 1);
        assert_eq!(records[2].item, 1);
    }

    #[test]
    fn rating_value_is_ignored_by_binarization() {
        let records = vec![
            RatingRecord {
                user: 0,
                item: 0,
                rating: 1,
                timestamp: 10,
            },
            RatingRecord {
                user: 0,
                item: 1,
                rating: 5,
                timestamp: 20,
            },
        ];
        let inter = build_interactions(&records);
        assert_eq!(inter.histories[0], vec![(0, 10), (1, 20)]);
    }

    #[test]
    fn duplicates_collapse_to_earliest_timestamp() {
        let records = vec![
            RatingRecord {
                user: 0,
                item: 3,
                rating: 4,
                timestamp: 50,
            },
            RatingRecord {
                user: 0,
                item: 3,
                rating: 2,
                timestamp: 10,
            },
        ];
        let inter = build_interactions(&records);
        assert_eq!(inter.histories[0], vec![(3, 10)]);
    }

    #[test]
    fn timestamp_ties_order_by_item() {
        let records = vec![
            RatingRecord {
                user: 0,
                item: 7,
                rating: 1,
                timestamp: 5,
            },
            RatingRecord {
                user: 0,
                item: 2,
                rating: 1,
                timestamp: 5,
            },
        ];
        let inter = build_interactions(&records);
        assert_eq!(inter.histories[0], vec![(2, 5), (7, 5)]);
    }

    #[test]
    fn interactions_invariant_to_record_order() {
        let mut records = vec![
            RatingRecord {
                user: 0,
                item: 3,
                rating: 4,
                timestamp: 50,
            },
            RatingRecord {
                user: 0,
                item: 1,
                rating: 2,
                timestamp: 10,
            },
            RatingRecord {
                user: 1,
                item: 0,
                rating: 2,
                timestamp: 30,
            },
            RatingRecord {
                user: 1,
                item: 3,
                rating: 2,
                timestamp: 20,
            },
        ];
        let forward = build_interactions(&records);
        records.reverse();
        assert_eq!(forward, build_interactions(&records));
    }

    fn toy_interactions() -> InteractionSet {
        // user 0: items (0,t1) (2,t3) (1,t5); user 1: two items.
        let records = vec![
            RatingRecord {
                user: 0,
                item: 0,
                rating: 5,
                timestamp: 1,
            },
            RatingRecord {
                user: 0,
                item: 2,
                rating: 5,
                timestamp: 3,
            },
            RatingRecord {
                user: 0,
                item: 1,
                rating: 5,
                timestamp: 5,
            },
            RatingRecord {
                user: 1,
                item: 3,
                rating: 5,
                timestamp: 2,
            },
            RatingRecord {
                user: 1,
                item: 0,
                rating: 5,
                timestamp: 9,
            },
        ];
        build_interactions(&records)
    }

    #[test]
    fn leave_one_out_holds_out_latest() {
        let inter = toy_interactions();
        let split = leave_one_out(&inter, IdMap::identity(2, 4)).unwrap();
        assert_eq!(split.test[0].positive_item, 1);
        assert_eq!(split.train[0], vec![(0, 1), (2, 3)]);
        assert_eq!(split.train[1].len(), 1);
        assert_eq!(split.test[1].positive_item, 0);
    }

    #[test]
    fn leave_one_out_tie_at_max_holds_larger_item() {
        let records = vec![
            RatingRecord {
                user: 0,
                item: 4,
                rating: 1,
                timestamp: 9,
            },
            RatingRecord {
                user: 0,
                item: 6,
                rating: 1,
                timestamp: 9,
            },
        ];
        let inter = build_interactions(&records);
        let split = leave_one_out(&inter, IdMap::identity(1, 7)).unwrap();
        assert_eq!(split.test[0].positive_item, 6);
        assert_eq!(split.train[0], vec![(4, 9)]);
    }

    #[test]
    fn leave_one_out_invariants() {
        let inter = toy_interactions();
        let split = leave_one_out(&inter, IdMap::identity(2, 4)).unwrap();
        for user in 0..inter.num_users {
            let train = &split.train[user];
            let held = split.test[user].positive_item;
            assert!(train.iter().all(|&(item, _)| item != held));
            assert_eq!(train.len(), inter.histories[user].len() - 1);
        }
    }

    #[test]
    fn leave_one_out_needs_two_positives() {
        let records = vec![RatingRecord {
            user: 0,
            item: 0,
            rating: 1,
            timestamp: 1,
        }];
        let inter = build_interactions(&records);
        let err = leave_one_out(&inter, IdMap::identity(1, 1)).unwrap_err();
        assert!(err.to_string().contains("user 0"));
    }

    fn split_with_negatives(num_items: usize, per_user: usize, num_users: usize) -> SplitDataset {
        let mut records = Vec::new();
        for u in 0..num_users as u32 {
            for k in 0..per_user as u32 {
                records.push(RatingRecord {
                    user: u,
                    item: (u * 13 + k * 7) % num_items as u32,
                    rating: 1,
                    timestamp: i64::from(k),
                });
            }
        }
        let inter = build_interactions(&records);
        let mut split = leave_one_out(&inter, IdMap::identity(inter.num_users, num_items)).unwrap();
        split.num_items = num_items;
        sample_test_negatives(&mut split, &Stream::new(99)).unwrap();
        split
    }

    #[test]
    fn negatives_avoid_positives() {
        let split = split_with_negatives(200, 50, 3);
        for t in &split.test {
            assert_eq!(t.negatives.len(), TEST_NEGATIVES);
            let positives = split.full_positive_set(t.user);
            let mut seen = t.negatives.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), TEST_NEGATIVES, "duplicate negatives");
            for n in &t.negatives {
                assert!(
                    positives.binary_search(n).is_err(),
                    "negative {n} is a positive"
                );
            }
        }
    }

    #[test]
    fn negative_sampling_is_deterministic() {
        let a = split_with_negatives(200, 50, 3);
        let b = split_with_negatives(200, 50, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn too_small_item_pool_is_an_error() {
        let records: Vec<RatingRecord> = (0..5)
            .map(|k| RatingRecord {
                user: 0,
                item: k,
                rating: 1,
                timestamp: i64::from(k),
            })
            .collect();
        let inter = build_interactions(&records);
        let mut split = leave_one_out(&inter, IdMap::identity(1, 100)).unwrap();
        split.num_items = 100;
        let err = sample_test_negatives(&mut split, &Stream::new(1)).unwrap_err();
        match err {
            CorpusError::NegativePool {
                eligible, needed, ..
            } => {
                assert_eq!(eligible, 95);
                assert_eq!(needed, 99);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn epoch_examples_counts_and_labels() {
        let split = split_with_negatives(200, 11, 1); // 10 train positives
        let examples = epoch_examples(&split, 4, &mut Stream::new(5));
        assert_eq!(examples.len(), 50);
        let positives = examples
            .iter()
            .filter(|e| e.label == Label::Positive)
            .count();
        assert_eq!(positives, 10);
        let full = split.full_positive_set(0);
        for e in &examples {
            match e.label {
                Label::Positive => assert!(full.binary_search(&e.item).is_ok()),
                Label::Negative => assert!(full.binary_search(&e.item).is_err()),
            }
        }
    }

    #[test]
    fn epoch_examples_ratio_zero_gives_positives_only() {
        let split = split_with_negatives(200, 11, 1);
        let examples = epoch_examples(&split, 0, &mut Stream::new(5));
        assert_eq!(examples.len(), 10);
        assert!(examples.iter().all(|e| e.label == Label::Positive));
    }

    #[test]
    fn epoch_examples_deterministic_and_seed_sensitive() {
        let split = split_with_negatives(300, 40, 4);
        let a = epoch_examples(&split, 4, &mut Stream::new(5));
        let b = epoch_examples(&split, 4, &mut Stream::new(5));
        assert_eq!(a, b);
        let c = epoch_examples(&split, 4, &mut Stream::new(6));
        assert_ne!(a, c);
        // Different seeds should give a different negative multiset.
        let negs = |xs: &[TrainExample]| {
            let mut v: Vec<u32> = xs
                .iter()
                .filter(|e| e.label == Label::Negative)
                .map(|e| e.item)
                .collect();
            v.sort_unstable();
            v
        };
        assert_ne!(negs(&a), negs(&c));
    }

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "atnaudit-corpus-{tag}-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn split_round_trip_is_identity() {
        let split = split_with_negatives(200, 50, 3);
        let dir = temp_dir("roundtrip");
        write_split(&split, &dir).unwrap();
        let back = read_split(&dir).unwrap();
        assert_eq!(split, back);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn truncated_negative_line_is_an_error() {
        let split = split_with_negatives(200, 50, 2);
        let dir = temp_dir("truncated");
        write_split(&split, &dir).unwrap();
        let path = dir.join(NEGATIVE_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let shorter = lines[1].rsplit_once('\t').unwrap().0.to_string();
        lines[1] = &shorter;
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        let err = read_split(&dir).unwrap_err();
        assert!(err.to_string().contains("98"), "got: {err}");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = temp_dir("empty");
        assert!(read_split(&dir).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn write_split_is_byte_stable() {
        let split = split_with_negatives(200, 50, 3);
        let dir_a = temp_dir("stable-a");
        let dir_b = temp_dir("stable-b");
        write_split(&split, &dir_a).unwrap();
        write_split(&split, &dir_b).unwrap();
        for name in [TRAIN_FILE, TEST_FILE, NEGATIVE_FILE, IDMAP_FILE] {
            assert_eq!(
                fs::read(dir_a.join(name)).unwrap(),
                fs::read(dir_b.join(name)).unwrap(),
                "{name} differs"
            );
        }
        fs::remove_dir_all(&dir_a).unwrap();
        fs::remove_dir_all(&dir_b).unwrap();
    }
}
