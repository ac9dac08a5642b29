//! Report files written after a run.
//!
//! * `results.json`: every report, plus recorded errors and aggregates.
//! * `summary.csv`: one row per completed cell.
//! * `curves.csv`: accuracy against truncated bits and PCA components.
//! * `rankings/<cell>.csv`: logistic-regression test items sorted by the
//!   probability of their predicted class.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::bench::runner::{CellKey, RunMatrixResult};
use crate::classify::{EvalReport, ItemProbability};
use crate::error::{Error, Result};
use crate::reduce::{Reduction, ReductionSpec};
use crate::tasks::FOLDS;

const SUMMARY_HEADER: [&str; 13] = [
    "embedding",
    "task",
    "mode",
    "classifier",
    "reduction",
    "n_items",
    "oov_dropped",
    "fold_0",
    "fold_1",
    "fold_2",
    "fold_3",
    "mean_accuracy",
    "macro_f1",
];

const CURVE_HEADER: [&str; 8] = [
    "embedding",
    "task",
    "classifier",
    "reduction",
    "axis",
    "value",
    "mean_accuracy",
    "macro_f1",
];

const RANKING_HEADER: [&str; 6] = ["rank", "item", "fold", "true_class", "predicted_class", "probability"];

/// Where a reduction sits on a plotted curve: the last `truncate` or `pca`
/// stage decides the axis. `sign` has no parameter; anything else is the
/// full-precision baseline.
pub fn curve_point(spec: &ReductionSpec) -> (&'static str, Option<u64>) {
    let mut point = ("baseline", None);
    for stage in spec.stages() {
        match *stage {
            Reduction::Truncate(b) => point = ("bits", Some(b as u64)),
            Reduction::Pca(k) => point = ("components", Some(k as u64)),
            Reduction::Sign => point = ("sign", None),
            Reduction::None | Reduction::Standardize => {}
        }
    }
    point
}

/// File name of a cell's ranking; anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn ranking_file_name(key: &CellKey) -> String {
    let raw = format!("{}__{}__{}__{}", key.embedding, key.task, key.classifier, key.reduction);
    let clean: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    format!("{clean}.csv")
}

/// Probabilities sorted descending; ties by item, then fold.
pub fn ranked(probs: &[ItemProbability]) -> Vec<&ItemProbability> {
    let mut sorted: Vec<&ItemProbability> = probs.iter().collect();
    sorted.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.item.cmp(&b.item))
            .then_with(|| a.fold.cmp(&b.fold))
    });
    sorted
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn summary_row(r: &EvalReport) -> Vec<String> {
    let mut row = vec![
        r.embedding.clone(),
        r.task.clone(),
        r.mode.to_string(),
        r.classifier.to_string(),
        r.reduction.clone(),
        r.n_items.to_string(),
        r.oov_dropped.to_string(),
    ];
    row.extend((0..FOLDS).map(|i| r.fold_accuracies.get(i).map(f64::to_string).unwrap_or_default()));
    row.push(r.mean_accuracy.to_string());
    row.push(r.macro_f1.to_string());
    row
}

/// Writes every report file into `dir`, creating it if needed. Returns the
/// paths written.
pub fn emit_reports(result: &RunMatrixResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("results.json");
    let mut out = create(&path)?;
    serde_json::to_writer_pretty(&mut out, result)?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("summary.csv");
    let mut summary = csv_writer(&path)?;
    summary.write_record(SUMMARY_HEADER)?;
    for r in &result.reports {
        summary.write_record(summary_row(r))?;
    }
    summary.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("curves.csv");
    let mut curves = csv_writer(&path)?;
    curves.write_record(CURVE_HEADER)?;
    for r in &result.reports {
        let (axis, value) = match r.reduction.parse::<ReductionSpec>() {
            Ok(spec) => curve_point(&spec),
            Err(_) => ("baseline", None),
        };
        curves.write_record([
            r.embedding.clone(),
            r.task.clone(),
            r.classifier.to_string(),
            r.reduction.clone(),
            axis.to_owned(),
            value.map(|v| v.to_string()).unwrap_or_default(),
            r.mean_accuracy.to_string(),
            r.macro_f1.to_string(),
        ])?;
    }
    curves.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let rankings = dir.join("rankings");
    for r in &result.reports {
        let Some(probs) = &r.item_probs else { continue };
        fs::create_dir_all(&rankings).map_err(|e| Error::io(&rankings, e))?;
        let path = rankings.join(ranking_file_name(&CellKey::of(r)));
        let mut w = csv_writer(&path)?;
        w.write_record(RANKING_HEADER)?;
        for (rank, p) in ranked(probs).into_iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                p.item.clone(),
                p.fold.to_string(),
                p.true_class.clone(),
                p.predicted_class.clone(),
                p.probability.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
