//! Experiment configuration files.
//!
//! Configs are strict JSON: unknown keys are errors. A minimal config names
//! the embeddings, tasks and classifiers; everything else has a default.
//!
//! ```json
//! {
//!   "embeddings": [{"name": "glove", "path": "glove.txt"}],
//!   "tasks": [{"name": "sentiment", "path": "sentiment.tsv",
//!              "mode": "term", "classes": ["POS", "NEG"]}],
//!   "classifiers": ["logreg", "svm-rbf"],
//!   "reductions": ["none", "truncate:31", "standardize,pca:10"]
//! }
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierKind, ParamGrid};
use crate::error::{Error, Result};
use crate::reduce::ReductionSpec;
use crate::tasks::TaskMode;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    pub name: String,
    pub path: PathBuf,
    /// Average repeated words (multi-prototype files) instead of rejecting them.
    #[serde(default)]
    pub collapse: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSource {
    pub name: String,
    pub path: PathBuf,
    pub mode: TaskMode,
    pub classes: Vec<String>,
    /// Pair mode only: add every pair in reversed order too.
    #[serde(default)]
    pub symmetric: bool,
    /// Pair mode only: add a class of this name made of sampled unrelated pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unrelated_class: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub embeddings: Vec<EmbeddingSource>,
    pub tasks: Vec<TaskSource>,
    pub classifiers: Vec<ClassifierKind>,
    #[serde(default = "default_reductions")]
    pub reductions: Vec<ReductionSpec>,
    /// Restrict every embedding set to the shared vocabulary. Defaults to
    /// on when more than one set is configured.
    #[serde(default)]
    pub intersect: Option<bool>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub grids: ParamGrid,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_reductions() -> Vec<ReductionSpec> {
    vec![ReductionSpec::none()]
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Whether vocabularies are intersected, after applying the default.
    pub fn intersect_enabled(&self) -> bool {
        self.intersect.unwrap_or(self.embeddings.len() > 1)
    }

    /// Number of (embedding, task, classifier, reduction) cells.
    pub fn cell_count(&self) -> usize {
        self.embeddings.len() * self.tasks.len() * self.classifiers.len() * self.reductions.len()
    }

    /// Checks everything that can be checked without loading data, including
    /// that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        for (what, len) in [
            ("embeddings", self.embeddings.len()),
            ("tasks", self.tasks.len()),
            ("classifiers", self.classifiers.len()),
            ("reductions", self.reductions.len()),
        ] {
            if len == 0 {
                return Err(Error::Config(format!("{what} must not be empty")));
            }
        }
        unique("embedding", self.embeddings.iter().map(|e| e.name.clone()))?;
        unique("task", self.tasks.iter().map(|t| t.name.clone()))?;
        unique("classifier", self.classifiers.iter().map(|c| c.to_string()))?;
        unique("reduction", self.reductions.iter().map(|r| r.to_string()))?;

        for task in &self.tasks {
            if task.classes.len() < 2 {
                return Err(Error::Config(format!("task {:?} needs at least 2 classes", task.name)));
            }
            if task.mode == TaskMode::Term && (task.symmetric || task.unrelated_class.is_some()) {
                return Err(Error::Config(format!(
                    "task {:?}: symmetric and unrelated_class apply to pair tasks only",
                    task.name
                )));
            }
            if let Some(label) = &task.unrelated_class {
                if label.is_empty() || task.classes.contains(label) {
                    return Err(Error::Config(format!(
                        "task {:?}: unrelated_class must be a new, non-empty label",
                        task.name
                    )));
                }
            }
        }
        let paths = self
            .embeddings
            .iter()
            .map(|e| &e.path)
            .chain(self.tasks.iter().map(|t| &t.path));
        for path in paths {
            if !path.is_file() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        self.grids.validate()
    }

    /// Makes relative paths relative to `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.embeddings.iter_mut().for_each(|e| fix(&mut e.path));
        self.tasks.iter_mut().for_each(|t| fix(&mut t.path));
        fix(&mut self.output_dir);
    }
}

fn unique(what: &str, names: impl Iterator<Item = String>) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if name.is_empty() {
            return Err(Error::Config(format!("empty {what} name")));
        }
        if !seen.insert(name.clone()) {
            return Err(Error::Config(format!("duplicate {what} {name:?}")));
        }
    }
    Ok(())
}

/// Parses config text. Relative paths are resolved against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut config: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.resolve_paths(base);
    config.intersect = Some(config.intersect_enabled());
    config.validate()?;
    Ok(config)
}

/// Reads and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}
