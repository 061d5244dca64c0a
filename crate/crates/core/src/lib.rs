//! Evaluation and robustness testing toolkit for argument unit recognition.
//!
//! The crate works on pre-tokenized sentences whose tokens carry one of three
//! labels (`PRO`, `CON`, `NON`). It covers:
//!
//! - [`corpus`]: parsing, segmentation, split assignment, deduplication, statistics
//! - [`labelalg`]: token/sentence label aggregation and the binary ARG / non-ARG view
//! - [`metrics`]: token-, sentence- and segment-F1, accuracy and run aggregation
//! - [`perturb`]: construction and evaluation of before/after perturbation sets
//! - [`subpop`]: similarity and token-ratio subpopulations with point-biserial correlation
//! - [`reprogate`]: the two-standard-deviation reproduction criterion

pub mod corpus;
pub mod error;
pub mod label;
pub mod labelalg;
pub mod metrics;
pub mod perturb;
pub mod reprogate;
pub mod subpop;
pub mod table;

pub use error::{Error, Result};
pub use label::{BinaryLabel, Label};
