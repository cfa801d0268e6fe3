//! Estimate how much the labeling function and the feature distribution
//! change across domains, and how that change affects cross-subject
//! generalization.
//!
//! The guide in `book/` walks through each estimator with runnable examples.

// `!(x > 0.0)` checks reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod domains;
pub mod error;
pub mod evaluate;
pub mod matrix;
pub mod normalize;
pub mod report;
pub mod rng;
pub mod shift;
pub mod signal;
pub mod table;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/normalization.md")]
    mod normalization {}
    #[doc = include_str!("../../../book/src/conditional-shift.md")]
    mod conditional_shift {}
    #[doc = include_str!("../../../book/src/marginal-shift.md")]
    mod marginal_shift {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/loso.md")]
    mod loso {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
