//! Information-reduction transforms applied to whole embedding sets.
//!
//! Reductions are written as strings so they can appear in configs and
//! report provenance: `none`, `truncate:<b>`, `sign`, `pca:<k>` and
//! `standardize`, chained left to right with commas
//! (`standardize,pca:10`). Every reduction keeps the vocabulary unchanged.

pub mod pca;
pub mod quantize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::{standardize, EmbeddingSet};
use crate::error::{Error, Result};

pub use pca::{pca_fit, pca_fit_matrix, pca_transform, PcaModel};
pub use quantize::{sign_binarize, truncate_bits, truncate_values, Truncation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reduction {
    None,
    /// Remove this many low-order bits (0..=31).
    Truncate(u32),
    Sign,
    /// Keep this many principal components.
    Pca(usize),
    Standardize,
}

impl Reduction {
    pub fn apply(&self, set: &EmbeddingSet) -> Result<EmbeddingSet> {
        match *self {
            Reduction::None => Ok(set.clone()),
            Reduction::Truncate(bits) => truncate_bits(set, bits),
            Reduction::Sign => Ok(sign_binarize(set)),
            Reduction::Pca(k) => {
                if k > set.dim() {
                    return Err(Error::InvalidReduction(format!(
                        "pca:{k} exceeds the {} dimensions of {:?}",
                        set.dim(),
                        set.name()
                    )));
                }
                pca_transform(&pca_fit(set, k)?, set)
            }
            Reduction::Standardize => standardize(set),
        }
    }
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reduction::None => f.write_str("none"),
            Reduction::Truncate(b) => write!(f, "truncate:{b}"),
            Reduction::Sign => f.write_str("sign"),
            Reduction::Pca(k) => write!(f, "pca:{k}"),
            Reduction::Standardize => f.write_str("standardize"),
        }
    }
}

impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidReduction(format!("{s:?}: {why}"));
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        match (name, arg) {
            ("none", None) => Ok(Reduction::None),
            ("sign", None) => Ok(Reduction::Sign),
            ("standardize", None) => Ok(Reduction::Standardize),
            ("truncate", Some(arg)) => {
                let bits: u32 = arg.parse().map_err(|_| bad("bit count must be an integer"))?;
                if bits > quantize::MAX_BITS {
                    return Err(bad("bit count must be in 0..=31"));
                }
                Ok(Reduction::Truncate(bits))
            }
            ("pca", Some(arg)) => {
                let k: usize = arg.parse().map_err(|_| bad("component count must be an integer"))?;
                if k == 0 {
                    return Err(bad("component count must be at least 1"));
                }
                Ok(Reduction::Pca(k))
            }
            _ => Err(bad("unknown reduction")),
        }
    }
}

/// A pipeline of reductions, applied left to right.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ReductionSpec {
    stages: Vec<Reduction>,
}

impl ReductionSpec {
    pub fn none() -> Self {
        ReductionSpec {
            stages: vec![Reduction::None],
        }
    }

    pub fn new(stages: Vec<Reduction>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidReduction("empty pipeline".into()));
        }
        Ok(ReductionSpec { stages })
    }

    pub fn stages(&self) -> &[Reduction] {
        &self.stages
    }

    pub fn apply(&self, set: &EmbeddingSet) -> Result<EmbeddingSet> {
        let mut current = set.clone();
        for stage in &self.stages {
            current = stage.apply(&current)?;
        }
        Ok(current)
    }
}

impl Default for ReductionSpec {
    fn default() -> Self {
        ReductionSpec::none()
    }
}

impl fmt::Display for ReductionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, stage) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{stage}")?;
        }
        Ok(())
    }
}

impl FromStr for ReductionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let stages = s
            .split(',')
            .map(|part| part.trim().parse())
            .collect::<Result<Vec<Reduction>>>()?;
        ReductionSpec::new(stages)
    }
}

impl TryFrom<String> for ReductionSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ReductionSpec> for String {
    fn from(spec: ReductionSpec) -> String {
        spec.to_string()
    }
}
