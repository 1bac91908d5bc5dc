//! Uplift modeling for experiments with multiple treatment arms.
//!
//! The crate is organized bottom-up:
//!
//! - [`dataset`] holds the experiment data model, CSV ingestion and splitting.
//! - [`baselearn`] provides regression trees, random forests, a mean predictor
//!   and out-of-fold cross-fitting.
//! - [`metalearn`] composes those into Two Model, X-Learner and R-Learner
//!   estimators for conversion and net-value objectives.
//! - [`datagen`] builds synthetic multi-arm experiments with known ground truth.
//! - [`eval`] computes uplift curves, AUUC, majority-vote recommendations and
//!   policy reports.

pub mod baselearn;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod metalearn;
pub mod seed;

pub use error::{Error, Result};
pub use matrix::Matrix;
