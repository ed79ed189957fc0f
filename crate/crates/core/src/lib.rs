//! Distance metric learning from similarity ratings and class labels.
//!
//! Four learners fit a weighted Euclidean metric (ordinal regression, a convex
//! program on similar/dissimilar pairs, L1-regularized NCA) or a weighted
//! metric plus a class-conditional term `uᵀQu'` (the hybrid learner). The
//! [`synth`] generator and the [`eval`] harness score them by NDCG of
//! nearest-neighbour retrieval.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod learners;
pub mod metric;
pub mod model;
pub mod seed;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use model::{Algorithm, FittedModel, ModelDocument};
