//! Classifiers, model selection and evaluation.
//!
//! Two probes are provided: multinomial [`logreg`] (linear) and an RBF
//! [`svm`] trained by SMO (non-linear). [`cv`] wraps them in dev-set grid
//! search and four-fold cross-validation.

pub mod cv;
pub mod logreg;
pub mod metrics;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cv::{cross_validate, grid_search, select_best, EvalReport, ItemProbability};
pub use logreg::{fit_logreg, predict_proba, train_logreg, LogRegModel, LogRegTrace};
pub use metrics::{accuracy, confusion_matrix, geometric_mean, metrics, Metrics};
pub use svm::{rbf_kernel, solve_dual, train_svm_rbf, DualSolution, SvmModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "logreg")]
    LogReg,
    #[serde(rename = "svm-rbf")]
    SvmRbf,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::LogReg => "logreg",
            ClassifierKind::SvmRbf => "svm-rbf",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(ClassifierKind::LogReg),
            "svm-rbf" => Ok(ClassifierKind::SvmRbf),
            other => Err(Error::Config(format!("unknown classifier {other:?}"))),
        }
    }
}

/// One point of a hyperparameter grid. `gamma` is absolute (already divided
/// by the feature dimension) and only set for the SVM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

/// Hyperparameter lists. SVM gamma values are multiplied by `1/d` for
/// `d`-dimensional features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamGrid {
    pub logreg_c: Vec<f64>,
    pub svm_c: Vec<f64>,
    pub svm_gamma: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            logreg_c: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            svm_c: vec![0.1, 1.0, 10.0, 100.0],
            svm_gamma: [-7, -5, -3, -1, 1].iter().map(|&e| 2f64.powi(e)).collect(),
        }
    }
}

impl ParamGrid {
    pub fn points(&self, kind: ClassifierKind, dim: usize) -> Vec<Hyperparams> {
        match kind {
            ClassifierKind::LogReg => self
                .logreg_c
                .iter()
                .map(|&c| Hyperparams { c, gamma: None })
                .collect(),
            ClassifierKind::SvmRbf => {
                let scale = 1.0 / dim.max(1) as f64;
                self.svm_c
                    .iter()
                    .flat_map(|&c| {
                        self.svm_gamma.iter().map(move |&g| Hyperparams {
                            c,
                            gamma: Some(g * scale),
                        })
                    })
                    .collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [
            ("logreg_c", &self.logreg_c),
            ("svm_c", &self.svm_c),
            ("svm_gamma", &self.svm_gamma),
        ] {
            if values.is_empty() {
                return Err(Error::Config(format!("grid {name} is empty")));
            }
            if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("grid {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// A trained probe of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    LogReg(LogRegModel),
    Svm(SvmModel),
}

impl TrainedModel {
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        match self {
            TrainedModel::LogReg(m) => m.predict(features),
            TrainedModel::Svm(m) => m.predict(features),
        }
    }
}

/// Trains one probe. SVM parameters must carry a gamma.
pub fn train(
    kind: ClassifierKind,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    params: Hyperparams,
    seed: u64,
) -> Result<TrainedModel> {
    match kind {
        ClassifierKind::LogReg => train_logreg(features, labels, params.c, seed).map(TrainedModel::LogReg),
        ClassifierKind::SvmRbf => {
            let gamma = params
                .gamma
                .ok_or_else(|| Error::InvalidTraining("SVM needs a gamma".into()))?;
            train_svm_rbf(features, labels, params.c, gamma, seed).map(TrainedModel::Svm)
        }
    }
}
