//! Dev-set grid search and four-fold cross-validation.
//!
//! Fold `i` is the test set, fold `(i + 1) mod 4` the development set and
//! the remaining two folds the training set, so each round uses a 50/25/25
//! split and every row is tested exactly once.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logreg::{train_logreg, LogRegModel};
use super::metrics::{accuracy, confusion_matrix, metrics};
use super::svm::{cross_sq_distances, fit_with_distances, sq_distances, FittedSvm};
use super::{ClassifierKind, Hyperparams, ParamGrid, TrainedModel};
use crate::error::{Error, Result};
use crate::tasks::{Dataset, TaskMode, FOLDS};

/// Probability the model gave its predicted class for one test item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemProbability {
    pub item: String,
    pub fold: usize,
    pub true_class: String,
    pub predicted_class: String,
    pub probability: f64,
}

/// Outcome of cross-validating one probe on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub embedding: String,
    pub task: String,
    pub mode: TaskMode,
    pub classifier: ClassifierKind,
    pub reduction: String,
    pub classes: Vec<String>,
    pub n_items: usize,
    pub oov_dropped: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub macro_f1: f64,
    pub best_params: Vec<Hyperparams>,
    /// Rows are true classes, columns predictions, pooled over test folds.
    pub confusion: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_probs: Option<Vec<ItemProbability>>,
}

enum Candidate {
    LogReg(LogRegModel),
    Svm(FittedSvm),
}

impl Candidate {
    fn into_model(self) -> TrainedModel {
        match self {
            Candidate::LogReg(m) => TrainedModel::LogReg(m),
            Candidate::Svm(f) => TrainedModel::Svm(f.model),
        }
    }
}

/// Picks the highest-scoring point; ties go to the smaller C, then the
/// smaller gamma.
pub fn select_best(scored: &[(Hyperparams, f64)]) -> Option<Hyperparams> {
    scored
        .iter()
        .min_by(|(pa, a), (pb, b)| {
            b.partial_cmp(a)
                .unwrap_or(Ordering::Equal)
                .then(pa.c.total_cmp(&pb.c))
                .then(pa.gamma.unwrap_or(0.0).total_cmp(&pb.gamma.unwrap_or(0.0)))
        })
        .map(|(p, _)| *p)
}

fn search(
    train_x: ArrayView2<'_, f64>,
    train_y: &[usize],
    dev_x: ArrayView2<'_, f64>,
    dev_y: &[usize],
    kind: ClassifierKind,
    points: &[Hyperparams],
    seed: u64,
) -> Result<(Hyperparams, Candidate)> {
    if points.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let distances = match kind {
        ClassifierKind::SvmRbf => Some((
            sq_distances(train_x),
            cross_sq_distances(dev_x, train_x),
        )),
        ClassifierKind::LogReg => None,
    };

    let outcomes: Vec<Result<(f64, Candidate)>> = points
        .par_iter()
        .map(|p| match (kind, &distances) {
            (ClassifierKind::LogReg, _) => {
                let model = train_logreg(train_x, train_y, p.c, seed)?;
                let acc = accuracy(dev_y, &model.predict(dev_x)?);
                Ok((acc, Candidate::LogReg(model)))
            }
            (ClassifierKind::SvmRbf, Some((train_d, dev_d))) => {
                let gamma = p
                    .gamma
                    .ok_or_else(|| Error::InvalidTraining("SVM grid point without gamma".into()))?;
                let fitted = fit_with_distances(train_x, train_y, train_d.view(), p.c, gamma)?;
                let acc = accuracy(dev_y, &fitted.predict_from_distances(dev_d.view()));
                Ok((acc, Candidate::Svm(fitted)))
            }
            (ClassifierKind::SvmRbf, None) => unreachable!("distances computed for SVM"),
        })
        .collect();

    let mut scored = Vec::new();
    let mut candidates = Vec::new();
    let mut last_error = None;
    for (p, outcome) in points.iter().zip(outcomes) {
        match outcome {
            Ok((acc, candidate)) => {
                scored.push((*p, acc));
                candidates.push(Some(candidate));
            }
            Err(e) => {
                log::warn!("skipping grid point {p:?} for {kind}: {e}");
                last_error = Some(e);
            }
        }
    }
    let Some(best) = select_best(&scored) else {
        let msg = last_error.map_or_else(|| "no grid points".to_owned(), |e| e.to_string());
        return Err(Error::GridExhausted(msg));
    };
    let idx = scored.iter().position(|(p, _)| *p == best).expect("best is scored");
    let candidate = candidates[idx].take().expect("candidate present");
    Ok((best, candidate))
}

/// Trains one model per grid point on the training rows and returns the
/// point with the best development accuracy. Points whose training fails are
/// skipped with a warning.
pub fn grid_search(
    train_x: ArrayView2<'_, f64>,
    train_y: &[usize],
    dev_x: ArrayView2<'_, f64>,
    dev_y: &[usize],
    kind: ClassifierKind,
    points: &[Hyperparams],
    seed: u64,
) -> Result<Hyperparams> {
    search(train_x, train_y, dev_x, dev_y, kind, points, seed).map(|(p, _)| p)
}

/// Rotates test and development folds over the dataset, selecting
/// hyperparameters on each development fold and evaluating the selected
/// model on the matching test fold.
pub fn cross_validate(
    dataset: &Dataset,
    kind: ClassifierKind,
    grid: &ParamGrid,
    seed: u64,
) -> Result<EvalReport> {
    let fold_of = dataset
        .fold_of()
        .ok_or_else(|| Error::InvalidDataset("folds have not been assigned".into()))?;
    let n_classes = dataset.classes().len();
    let points = grid.points(kind, dataset.dim());

    let mut fold_accuracies = Vec::with_capacity(FOLDS);
    let mut best_params = Vec::with_capacity(FOLDS);
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    let mut item_probs = Vec::new();

    for fold in 0..FOLDS {
        let dev_fold = (fold + 1) % FOLDS;
        let train_folds: Vec<usize> = (0..FOLDS).filter(|f| *f != fold && *f != dev_fold).collect();
        let test_idx = dataset.fold_indices(&[fold]);
        let dev_idx = dataset.fold_indices(&[dev_fold]);
        let train_idx = dataset.fold_indices(&train_folds);
        if test_idx.is_empty() || dev_idx.is_empty() || train_idx.is_empty() {
            return Err(Error::InvalidDataset(format!("fold {fold} has an empty split")));
        }
        debug_assert_eq!(fold_of[test_idx[0]], fold);

        let (train_x, train_y) = dataset.select(&train_idx);
        let (dev_x, dev_y) = dataset.select(&dev_idx);
        let (test_x, test_y) = dataset.select(&test_idx);
        let fold_seed = seed.wrapping_add(fold as u64);
        let (params, candidate) = search(
            train_x.view(),
            &train_y,
            dev_x.view(),
            &dev_y,
            kind,
            &points,
            fold_seed,
        )?;
        let model = candidate.into_model();
        let predicted = model.predict(test_x.view())?;

        fold_accuracies.push(accuracy(&test_y, &predicted));
        best_params.push(params);
        for (row, fold_row) in confusion.iter_mut().zip(confusion_matrix(&test_y, &predicted, n_classes)) {
            for (total, v) in row.iter_mut().zip(fold_row) {
                *total += v;
            }
        }
        if let TrainedModel::LogReg(m) = &model {
            collect_probabilities(dataset, m, &test_idx, &test_x, fold, &mut item_probs)?;
        }
    }

    let pooled = metrics(&confusion)?;
    let provenance = dataset.provenance();
    Ok(EvalReport {
        embedding: provenance.embedding.clone(),
        task: provenance.task.clone(),
        mode: dataset.mode(),
        classifier: kind,
        reduction: provenance.reduction.clone(),
        classes: dataset.classes().to_vec(),
        n_items: dataset.len(),
        oov_dropped: dataset.oov_dropped(),
        mean_accuracy: fold_accuracies.iter().sum::<f64>() / FOLDS as f64,
        fold_accuracies,
        macro_f1: pooled.macro_f1,
        best_params,
        confusion,
        item_probs: (kind == ClassifierKind::LogReg).then_some(item_probs),
    })
}

fn collect_probabilities(
    dataset: &Dataset,
    model: &LogRegModel,
    test_idx: &[usize],
    test_x: &Array2<f64>,
    fold: usize,
    out: &mut Vec<ItemProbability>,
) -> Result<()> {
    let probs = model.predict_proba(test_x.view())?;
    for (&i, row) in test_idx.iter().zip(probs.rows()) {
        let predicted = super::logreg::argmax(row);
        out.push(ItemProbability {
            item: dataset.items()[i].to_string(),
            fold,
            true_class: dataset.classes()[dataset.labels()[i]].clone(),
            predicted_class: dataset.classes()[predicted].clone(),
            probability: row[predicted],
        });
    }
    Ok(())
}
