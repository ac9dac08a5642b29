//! Runs the (embedding × task × classifier × reduction) matrix.
//!
//! Seeds: every random choice derives from the config seed through
//! [`cell_seed`]. Task balancing uses the key `task|<task>`; feature
//! construction and fold assignment use `<embedding>|<task>`, so every
//! classifier and reduction of an (embedding, task) pair sees the same folds;
//! training uses the full cell key `<embedding>|<task>|<classifier>|<reduction>`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::config::ExperimentConfig;
use crate::classify::{cross_validate, geometric_mean, ClassifierKind, EvalReport};
use crate::embeddings::{intersect_vocab, load_embeddings, EmbeddingSet};
use crate::error::{Error, Result};
use crate::reduce::ReductionSpec;
use crate::tasks::{build_features, load_pair_task, load_term_task, make_folds, LabeledTask, Provenance, TaskMode};

/// `seed XOR` the first eight bytes (big-endian) of SHA-256 of `key`.
pub fn cell_seed(seed: u64, key: &str) -> u64 {
    let digest = Sha256::digest(key.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    seed ^ u64::from_be_bytes(head)
}

/// Identifies one matrix cell.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub embedding: String,
    pub task: String,
    pub classifier: ClassifierKind,
    pub reduction: String,
}

impl CellKey {
    pub fn of(report: &EvalReport) -> CellKey {
        CellKey {
            embedding: report.embedding.clone(),
            task: report.task.clone(),
            classifier: report.classifier,
            reduction: report.reduction.clone(),
        }
    }

    /// `embedding|task|classifier|reduction`, the string hashed for the seed.
    pub fn label(&self) -> String {
        format!("{}|{}|{}|{}", self.embedding, self.task, self.classifier, self.reduction)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    #[serde(flatten)]
    pub key: CellKey,
    pub message: String,
}

/// Classifier-averaged accuracy of one (embedding, task, reduction).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskAggregate {
    pub embedding: String,
    pub task: String,
    pub reduction: String,
    pub classifiers: usize,
    pub geometric_mean: f64,
    pub arithmetic_mean: f64,
}

/// Task-averaged accuracy of one (embedding, reduction), computed from the
/// per-task classifier averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingAggregate {
    pub embedding: String,
    pub reduction: String,
    pub tasks: usize,
    pub geometric_mean: f64,
    pub arithmetic_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub by_task: Vec<TaskAggregate>,
    pub by_embedding: Vec<EmbeddingAggregate>,
    /// Cells missing from the averages because they failed.
    pub omissions: Vec<String>,
}

impl Aggregates {
    pub fn is_empty(&self) -> bool {
        self.by_task.is_empty() && self.by_embedding.is_empty() && self.omissions.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMatrixResult {
    pub reports: Vec<EvalReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<CellError>,
    #[serde(default, skip_serializing_if = "Aggregates::is_empty")]
    pub aggregates: Aggregates,
}

impl RunMatrixResult {
    /// Sorts reports and errors by cell key and recomputes the aggregates.
    pub fn from_cells(mut reports: Vec<EvalReport>, mut errors: Vec<CellError>) -> Self {
        reports.sort_by_key(CellKey::of);
        errors.sort_by(|a, b| a.key.cmp(&b.key));
        let aggregates = aggregate(&reports, &errors);
        RunMatrixResult {
            reports,
            errors,
            aggregates,
        }
    }
}

/// Zero if any value is zero, otherwise the usual geometric mean.
fn geometric_or_zero(values: &[f64]) -> f64 {
    if values.contains(&0.0) {
        0.0
    } else {
        geometric_mean(values).unwrap_or(f64::NAN)
    }
}

fn arithmetic(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Geometric (and arithmetic) means of `mean_accuracy` across classifiers,
/// then across tasks. Only completed cells contribute.
pub fn aggregate(reports: &[EvalReport], errors: &[CellError]) -> Aggregates {
    let mut per_task: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in reports {
        per_task
            .entry((&r.embedding, &r.task, &r.reduction))
            .or_default()
            .push(r.mean_accuracy);
    }
    let by_task: Vec<TaskAggregate> = per_task
        .into_iter()
        .map(|((embedding, task, reduction), values)| TaskAggregate {
            embedding: embedding.to_owned(),
            task: task.to_owned(),
            reduction: reduction.to_owned(),
            classifiers: values.len(),
            geometric_mean: geometric_or_zero(&values),
            arithmetic_mean: arithmetic(&values),
        })
        .collect();

    // (geometric, arithmetic) per-task means, keyed by (embedding, reduction).
    type Means = (Vec<f64>, Vec<f64>);
    let mut per_embedding: BTreeMap<(&str, &str), Means> = BTreeMap::new();
    for t in &by_task {
        let entry = per_embedding.entry((&t.embedding, &t.reduction)).or_default();
        entry.0.push(t.geometric_mean);
        entry.1.push(t.arithmetic_mean);
    }
    let by_embedding = per_embedding
        .into_iter()
        .map(|((embedding, reduction), (geo, arith))| EmbeddingAggregate {
            embedding: embedding.to_owned(),
            reduction: reduction.to_owned(),
            tasks: geo.len(),
            geometric_mean: geometric_or_zero(&geo),
            arithmetic_mean: arithmetic(&arith),
        })
        .collect();

    Aggregates {
        by_task,
        by_embedding,
        omissions: errors.iter().map(|e| e.key.label()).collect(),
    }
}

/// Loads every embedding set, renamed to its config name and intersected
/// when the config asks for it.
pub fn load_sets(config: &ExperimentConfig) -> Result<Vec<EmbeddingSet>> {
    let sets = config
        .embeddings
        .iter()
        .map(|e| load_embeddings(&e.path, e.collapse).map(|s| s.with_name(e.name.clone())))
        .collect::<Result<Vec<_>>>()?;
    if config.intersect_enabled() {
        let shared = intersect_vocab(&sets)?;
        log::info!("shared vocabulary: {} words", shared[0].len());
        Ok(shared)
    } else {
        Ok(sets)
    }
}

pub fn load_tasks(config: &ExperimentConfig) -> Result<Vec<LabeledTask>> {
    config
        .tasks
        .iter()
        .map(|t| {
            let seed = cell_seed(config.seed, &format!("task|{}", t.name));
            let task = match t.mode {
                TaskMode::Term => load_term_task(&t.path, &t.classes, seed)?,
                TaskMode::Pair => load_pair_task(&t.path, &t.classes, t.symmetric, seed)?,
            };
            let task = match &t.unrelated_class {
                Some(label) => {
                    let seed = cell_seed(config.seed, &format!("unrelated|{}", t.name));
                    task.with_unrelated_class(label, seed)?
                }
                None => task,
            };
            Ok(task.renamed(&t.name))
        })
        .collect()
}

/// Runs one cell on an already-reduced embedding set.
pub fn run_cell(
    task: &LabeledTask,
    set: &EmbeddingSet,
    kind: ClassifierKind,
    reduction: &ReductionSpec,
    config: &ExperimentConfig,
) -> Result<EvalReport> {
    let key = CellKey {
        embedding: set.name().to_owned(),
        task: task.name().to_owned(),
        classifier: kind,
        reduction: reduction.to_string(),
    };
    let data_seed = cell_seed(config.seed, &format!("{}|{}", key.embedding, key.task));
    let dataset = build_features(task, set, data_seed)?.with_provenance(Provenance {
        task: key.task.clone(),
        embedding: key.embedding.clone(),
        reduction: key.reduction.clone(),
    });
    let dataset = make_folds(&dataset, data_seed)?;
    cross_validate(&dataset, kind, &config.grids, cell_seed(config.seed, &key.label()))
}

/// Runs the whole matrix on `workers` threads. Load errors abort; errors
/// inside a cell are recorded and the other cells still run. The result
/// does not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<RunMatrixResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_matrix(config))
}

fn run_matrix(config: &ExperimentConfig) -> Result<RunMatrixResult> {
    let sets = load_sets(config)?;
    let tasks = load_tasks(config)?;

    let reduce_jobs: Vec<(usize, usize)> = (0..sets.len())
        .flat_map(|e| (0..config.reductions.len()).map(move |r| (e, r)))
        .collect();
    let reduced: Vec<std::result::Result<EmbeddingSet, String>> = reduce_jobs
        .par_iter()
        .map(|&(e, r)| config.reductions[r].apply(&sets[e]).map_err(|err| err.to_string()))
        .collect();

    let mut cells = Vec::with_capacity(config.cell_count());
    for (job, &(_, r)) in reduce_jobs.iter().enumerate() {
        for t in 0..tasks.len() {
            for &kind in &config.classifiers {
                cells.push((job, r, t, kind));
            }
        }
    }
    let outcomes: Vec<std::result::Result<EvalReport, CellError>> = cells
        .par_iter()
        .map(|&(job, r, t, kind)| {
            let reduction = &config.reductions[r];
            let key = CellKey {
                embedding: sets[reduce_jobs[job].0].name().to_owned(),
                task: tasks[t].name().to_owned(),
                classifier: kind,
                reduction: reduction.to_string(),
            };
            let result = match &reduced[job] {
                Ok(set) => run_cell(&tasks[t], set, kind, reduction, config).map_err(|e| e.to_string()),
                Err(message) => Err(message.clone()),
            };
            result.map_err(|message| {
                log::warn!("cell {} failed: {message}", key.label());
                CellError { key, message }
            })
        })
        .collect();

    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(report) => reports.push(report),
            Err(error) => errors.push(error),
        }
    }
    Ok(RunMatrixResult::from_cells(reports, errors))
}
