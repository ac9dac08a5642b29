//! Supervised probing of word-embedding spaces.
//!
//! Load embedding sets ([`embeddings`]), turn labeled word lists into term or
//! pair classification tasks ([`tasks`]), measure what linear and RBF probes
//! can recover with four-fold cross-validation ([`classify`]), and repeat the
//! measurement after bit truncation or PCA ([`reduce`]). [`bench`] runs whole
//! experiment matrices from a JSON config.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod classify;
pub mod embeddings;
pub mod error;
pub mod reduce;
pub mod tasks;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/tasks.md")]
    mod tasks {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/reductions.md")]
    mod reductions {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
