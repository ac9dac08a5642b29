//! Labeled probing tasks and the numeric datasets built from them.
//!
//! A term task labels single words ("good" → POS); a pair task labels
//! ordered word pairs ("store", "shop" → SYN). Tasks are kept class-balanced
//! so the chance baseline is 1/c. A [`Dataset`] is a task rendered through
//! one embedding set, with stratified 4-fold assignments.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};

/// Number of cross-validation folds.
pub const FOLDS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    Term,
    Pair,
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskMode::Term => "term",
            TaskMode::Pair => "pair",
        })
    }
}

/// A single word or an ordered word pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Item {
    Term(String),
    Pair(String, String),
}

impl Item {
    pub fn mode(&self) -> TaskMode {
        match self {
            Item::Term(_) => TaskMode::Term,
            Item::Pair(..) => TaskMode::Pair,
        }
    }

    pub fn words(&self) -> Vec<&str> {
        match self {
            Item::Term(w) => vec![w],
            Item::Pair(a, b) => vec![a, b],
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Item::Term(w) => f.write_str(w),
            Item::Pair(a, b) => write!(f, "{a} {b}"),
        }
    }
}

/// A term or pair classification task.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTask {
    name: String,
    mode: TaskMode,
    classes: Vec<String>,
    items: Vec<(Item, usize)>,
}

impl LabeledTask {
    /// Validates classes and items and drops repeated `(item, class)`
    /// entries. The result is not necessarily balanced; see
    /// [`balance_classes`].
    pub fn new(
        name: impl Into<String>,
        mode: TaskMode,
        classes: Vec<String>,
        items: Vec<(Item, usize)>,
    ) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InvalidTask("a task needs at least 2 classes".into()));
        }
        let unique: HashSet<&String> = classes.iter().collect();
        if unique.len() != classes.len() || classes.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidTask(format!("invalid class list {classes:?}")));
        }
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(items.len());
        for (item, class) in items {
            if class >= classes.len() {
                return Err(Error::InvalidTask(format!("class index {class} out of range")));
            }
            if item.mode() != mode {
                return Err(Error::InvalidTask(format!("{mode} task cannot hold item {item:?}")));
            }
            if let Item::Pair(a, b) = &item {
                if a == b {
                    return Err(Error::InvalidTask(format!("degenerate pair ({a}, {b})")));
                }
            }
            if seen.insert((item.clone(), class)) {
                kept.push((item, class));
            }
        }
        Ok(LabeledTask {
            name: name.into(),
            mode,
            classes,
            items: kept,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn items(&self) -> &[(Item, usize)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for (_, c) in &self.items {
            counts[*c] += 1;
        }
        counts
    }

    pub fn is_balanced(&self) -> bool {
        let counts = self.class_counts();
        counts.iter().all(|&c| c == counts[0])
    }

    /// Every distinct word mentioned by the task, sorted.
    pub fn vocabulary(&self) -> Vec<String> {
        let words: BTreeSet<&str> = self.items.iter().flat_map(|(i, _)| i.words()).collect();
        words.into_iter().map(str::to_owned).collect()
    }

    /// Adds a "no relation" class of randomly sampled pairs drawn from the
    /// task's own vocabulary, as many as the largest existing class. Pairs
    /// already in the task (in either order) are never sampled.
    pub fn with_unrelated_class(&self, label: &str, seed: u64) -> Result<LabeledTask> {
        if self.mode != TaskMode::Pair {
            return Err(Error::InvalidTask("unrelated pairs need a pair task".into()));
        }
        let exclusions: HashSet<(String, String)> = self
            .items
            .iter()
            .filter_map(|(item, _)| match item {
                Item::Pair(a, b) => Some((a.clone(), b.clone())),
                Item::Term(_) => None,
            })
            .collect();
        let n = self.class_counts().into_iter().max().unwrap_or(0);
        let pairs = sample_unrelated_pairs(&self.vocabulary(), n, &exclusions, seed)?;
        let mut classes = self.classes.clone();
        classes.push(label.to_owned());
        let new_class = classes.len() - 1;
        let mut items = self.items.clone();
        items.extend(pairs.into_iter().map(|(a, b)| (Item::Pair(a, b), new_class)));
        LabeledTask::new(self.name.clone(), self.mode, classes, items)
    }
}

/// Subsamples every class, without replacement, down to the smallest class
/// count. Surviving items keep their original order.
pub fn balance_classes(task: &LabeledTask, seed: u64) -> Result<LabeledTask> {
    let counts = task.class_counts();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidTask(format!(
            "class {:?} has no items",
            task.classes[empty]
        )));
    }
    let target = *counts.iter().min().expect("at least two classes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; task.items.len()];
    for class in 0..task.classes.len() {
        let mut members: Vec<usize> = task
            .items
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| *c == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() > target {
            members.shuffle(&mut rng);
            members.truncate(target);
        }
        for i in members {
            keep[i] = true;
        }
    }
    let items = task
        .items
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(item, _)| item.clone())
        .collect();
    Ok(LabeledTask {
        items,
        ..task.clone()
    })
}

fn task_lines<R: BufRead>(reader: R, source: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push((idx + 1, line.split('\t').map(|f| f.trim().to_owned()).collect()));
    }
    Ok(out)
}

fn class_index(
    classes: &[String],
    label: &str,
    source: &Path,
    line: usize,
) -> Result<usize> {
    classes.iter().position(|c| c == label).ok_or_else(|| Error::Parse {
        path: source.to_path_buf(),
        line,
        message: format!("unknown label {label:?}, expected one of {classes:?}"),
    })
}

fn malformed(source: &Path, line: usize, expected: &str) -> Error {
    Error::Parse {
        path: source.to_path_buf(),
        line,
        message: format!("expected {expected}"),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "task".to_owned())
}

/// Loads a `word<TAB>label` file into a balanced term task.
pub fn load_term_task(path: impl AsRef<Path>, classes: &[String], seed: u64) -> Result<LabeledTask> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_term_task(BufReader::new(file), &stem(path), path, classes, seed)
}

/// Like [`load_term_task`] but from a reader; `name` names the task.
pub fn read_term_task<R: BufRead>(
    reader: R,
    name: &str,
    classes: &[String],
    seed: u64,
) -> Result<LabeledTask> {
    parse_term_task(reader, name, Path::new(name), classes, seed)
}

fn parse_term_task<R: BufRead>(
    reader: R,
    name: &str,
    source: &Path,
    classes: &[String],
    seed: u64,
) -> Result<LabeledTask> {
    let mut items = Vec::new();
    for (line, fields) in task_lines(reader, source)? {
        match fields.as_slice() {
            [word, label] if !word.is_empty() && !label.is_empty() => {
                let class = class_index(classes, label, source, line)?;
                items.push((Item::Term(word.clone()), class));
            }
            _ => return Err(malformed(source, line, "word<TAB>label")),
        }
    }
    let task = LabeledTask::new(name, TaskMode::Term, classes.to_vec(), items)?;
    balance_classes(&task, seed)
}

/// Loads a `word1<TAB>word2<TAB>label` file into a balanced pair task. With
/// `symmetric` set, every pair is also added in reversed order before
/// balancing.
pub fn load_pair_task(
    path: impl AsRef<Path>,
    classes: &[String],
    symmetric: bool,
    seed: u64,
) -> Result<LabeledTask> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pair_task(BufReader::new(file), &stem(path), path, classes, symmetric, seed)
}

pub fn read_pair_task<R: BufRead>(
    reader: R,
    name: &str,
    classes: &[String],
    symmetric: bool,
    seed: u64,
) -> Result<LabeledTask> {
    parse_pair_task(reader, name, Path::new(name), classes, symmetric, seed)
}

fn parse_pair_task<R: BufRead>(
    reader: R,
    name: &str,
    source: &Path,
    classes: &[String],
    symmetric: bool,
    seed: u64,
) -> Result<LabeledTask> {
    let mut items = Vec::new();
    for (line, fields) in task_lines(reader, source)? {
        match fields.as_slice() {
            [a, b, label] if !a.is_empty() && !b.is_empty() && !label.is_empty() => {
                let class = class_index(classes, label, source, line)?;
                if a == b {
                    return Err(Error::Parse {
                        path: source.to_path_buf(),
                        line,
                        message: format!("pair of identical words ({a}, {b})"),
                    });
                }
                items.push((Item::Pair(a.clone(), b.clone()), class));
                if symmetric {
                    items.push((Item::Pair(b.clone(), a.clone()), class));
                }
            }
            _ => return Err(malformed(source, line, "word1<TAB>word2<TAB>label")),
        }
    }
    let task = LabeledTask::new(name, TaskMode::Pair, classes.to_vec(), items)?;
    balance_classes(&task, seed)
}

/// Draws `n` random ordered pairs of distinct words. No two returned pairs
/// share the same unordered word set, and no pair appears in `exclusions`
/// in either order. Gives up after `1000 * n` rejection-sampling attempts.
pub fn sample_unrelated_pairs(
    vocab: &[String],
    n: usize,
    exclusions: &HashSet<(String, String)>,
    seed: u64,
) -> Result<Vec<(String, String)>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let vocab: Vec<&String> = vocab.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = HashSet::new();
    let mut pairs = Vec::with_capacity(n);
    let cap = 1000 * n;
    let mut attempts = 0;
    while pairs.len() < n && attempts < cap && vocab.len() >= 2 {
        attempts += 1;
        let i = rng.random_range(0..vocab.len());
        let j = rng.random_range(0..vocab.len());
        if i == j || chosen.contains(&(i.min(j), i.max(j))) {
            continue;
        }
        let (a, b) = (vocab[i], vocab[j]);
        if exclusions.contains(&(a.clone(), b.clone())) || exclusions.contains(&(b.clone(), a.clone())) {
            continue;
        }
        chosen.insert((i.min(j), i.max(j)));
        pairs.push((a.clone(), b.clone()));
    }
    if pairs.len() < n {
        return Err(Error::PairSampling {
            requested: n,
            found: pairs.len(),
            attempts,
        });
    }
    Ok(pairs)
}

/// Where a dataset came from; carried into reports.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub task: String,
    pub embedding: String,
    pub reduction: String,
}

/// A feature matrix with integer labels and (after [`make_folds`]) fold
/// assignments.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: Vec<String>,
    items: Vec<Item>,
    fold_of: Option<Vec<usize>>,
    mode: TaskMode,
    oov_dropped: usize,
    provenance: Provenance,
}

impl Dataset {
    /// Wraps planted or externally built data. Items are named `x0`, `x1`, …
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: Vec<String>) -> Result<Self> {
        let items = (0..labels.len()).map(|i| Item::Term(format!("x{i}"))).collect();
        Self::with_items(features, labels, classes, items)
    }

    pub fn with_items(
        features: Array2<f64>,
        labels: Vec<usize>,
        classes: Vec<String>,
        items: Vec<Item>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() || items.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows, {} labels, {} items",
                features.nrows(),
                labels.len(),
                items.len()
            )));
        }
        if labels.iter().any(|&l| l >= classes.len()) {
            return Err(Error::InvalidDataset("label out of class range".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature".into()));
        }
        let mode = items.first().map_or(TaskMode::Term, Item::mode);
        Ok(Dataset {
            features,
            labels,
            classes,
            items,
            fold_of: None,
            mode,
            oov_dropped: 0,
            provenance: Provenance::default(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Fold index of every row, once [`make_folds`] has run.
    pub fn fold_of(&self) -> Option<&[usize]> {
        self.fold_of.as_deref()
    }

    /// Task items dropped because a word was missing from the embeddings.
    pub fn oov_dropped(&self) -> usize {
        self.oov_dropped
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows and labels at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (
            self.features.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Indices of the rows assigned to `folds`.
    pub fn fold_indices(&self, folds: &[usize]) -> Vec<usize> {
        match &self.fold_of {
            Some(fold_of) => fold_of
                .iter()
                .enumerate()
                .filter(|(_, f)| folds.contains(f))
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Renders a task through an embedding set. Term rows are the word vector;
/// pair rows are the two vectors concatenated. Items with an unknown word
/// are dropped, then classes are rebalanced.
pub fn build_features(task: &LabeledTask, set: &EmbeddingSet, seed: u64) -> Result<Dataset> {
    let known: Vec<(Item, usize)> = task
        .items()
        .iter()
        .filter(|(item, _)| item.words().iter().all(|w| set.contains(w)))
        .cloned()
        .collect();
    let oov_dropped = task.len() - known.len();
    if known.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "no item of task {:?} is covered by embeddings {:?}",
            task.name(),
            set.name()
        )));
    }
    let filtered = LabeledTask {
        items: known,
        ..task.clone()
    };
    let balanced = balance_classes(&filtered, seed)?;

    let width = match task.mode() {
        TaskMode::Term => set.dim(),
        TaskMode::Pair => 2 * set.dim(),
    };
    let mut features = Array2::zeros((balanced.len(), width));
    let mut labels = Vec::with_capacity(balanced.len());
    let mut items = Vec::with_capacity(balanced.len());
    for (mut row, (item, class)) in features.rows_mut().into_iter().zip(balanced.items()) {
        let mut col = 0;
        for word in item.words() {
            let v = set.lookup(word).expect("filtered to known words");
            for &x in v {
                row[col] = x;
                col += 1;
            }
        }
        labels.push(*class);
        items.push(item.clone());
    }
    Ok(Dataset {
        features,
        labels,
        classes: task.classes().to_vec(),
        items,
        fold_of: None,
        mode: task.mode(),
        oov_dropped,
        provenance: Provenance {
            task: task.name().to_owned(),
            embedding: set.name().to_owned(),
            reduction: "none".to_owned(),
        },
    })
}

/// Assigns every row to one of four folds, stratified by class. Fold sizes
/// differ by at most one, and each fold holds `⌊c·s/n⌋` or `⌈c·s/n⌉` items
/// of a class with `c` items, for a fold of size `s`. Which members of a
/// class land in which fold is decided by a seeded shuffle.
pub fn make_folds(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let n = dataset.len();
    if n < 2 * FOLDS {
        return Err(Error::InvalidDataset(format!(
            "need at least {} rows for {FOLDS} folds, got {n}",
            2 * FOLDS
        )));
    }
    let n_classes = dataset.classes.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        members[l].push(i);
    }
    let sizes: Vec<usize> = (0..FOLDS).map(|f| n / FOLDS + usize::from(f < n % FOLDS)).collect();
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let quota = fold_quota(&sizes, &counts, n)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; n];
    for (class, mut rows) in members.into_iter().enumerate() {
        rows.shuffle(&mut rng);
        let mut rows = rows.into_iter();
        for (fold, row) in quota.iter().enumerate() {
            for i in rows.by_ref().take(row[class]) {
                fold_of[i] = fold;
            }
        }
    }
    Ok(Dataset {
        fold_of: Some(fold_of),
        ..dataset.clone()
    })
}

/// Integer fold × class counts with the given margins, each the floor or
/// ceiling of `counts[k] · sizes[f] / n`. Starts from the floors and picks
/// which cells round up with a unit-capacity max flow (folds → classes).
fn fold_quota(sizes: &[usize], counts: &[usize], n: usize) -> Result<Vec<Vec<usize>>> {
    let (folds, classes) = (sizes.len(), counts.len());
    let mut quota = vec![vec![0; classes]; folds];
    let mut fractional = vec![vec![false; classes]; folds];
    for f in 0..folds {
        for k in 0..classes {
            let exact = counts[k] * sizes[f];
            quota[f][k] = exact / n;
            fractional[f][k] = !exact.is_multiple_of(n);
        }
    }
    let mut row_need: Vec<usize> = (0..folds).map(|f| sizes[f] - quota[f].iter().sum::<usize>()).collect();
    let mut col_need: Vec<usize> = (0..classes)
        .map(|k| counts[k] - (0..folds).map(|f| quota[f][k]).sum::<usize>())
        .collect();

    // Augmenting paths alternate fold → class over unused fractional cells
    // and class → fold back over cells already rounded up.
    while let Some(start) = (0..folds).find(|&f| row_need[f] > 0) {
        // class_parent[k]: fold that rounds cell (f, k) up;
        // fold_parent[g]: class whose rounded-up cell (g, k) is given back.
        let mut class_parent: Vec<Option<usize>> = vec![None; classes];
        let mut fold_parent: Vec<Option<usize>> = vec![None; folds];
        let mut seen_fold = vec![false; folds];
        seen_fold[start] = true;
        let mut frontier = vec![start];
        let mut end = None;
        'search: while !frontier.is_empty() {
            let mut next = Vec::new();
            for &f in &frontier {
                for k in 0..classes {
                    if class_parent[k].is_some() || !fractional[f][k] || quota[f][k] * n >= counts[k] * sizes[f] {
                        continue;
                    }
                    class_parent[k] = Some(f);
                    if col_need[k] > 0 {
                        end = Some(k);
                        break 'search;
                    }
                    for g in 0..folds {
                        if !seen_fold[g] && fractional[g][k] && quota[g][k] * n > counts[k] * sizes[g] {
                            seen_fold[g] = true;
                            fold_parent[g] = Some(k);
                            next.push(g);
                        }
                    }
                }
            }
            frontier = next;
        }
        let Some(mut k) = end else {
            return Err(Error::InvalidDataset("cannot stratify folds".into()));
        };
        col_need[k] -= 1;
        loop {
            let f = class_parent[k].expect("path is connected");
            quota[f][k] += 1;
            if f == start {
                break;
            }
            let prev = fold_parent[f].expect("path is connected");
            quota[f][prev] -= 1;
            k = prev;
        }
        row_need[start] -= 1;
    }
    Ok(quota)
}
