//! Tree boosting with gradient, Newton and hybrid gradient-Newton updates.
//!
//! The crate is organised bottom-up:
//!
//! - [`losses`]: per-observation loss, gradient and diagonal Hessian for each
//!   supported likelihood, plus the link from scores to responses.
//! - [`tree`]: exact-greedy weighted least-squares regression trees with the
//!   per-leaf count / equivalent-weight / Hessian-sum constraints.
//! - [`boosting`]: the stagewise ensemble fit and staged prediction.
//! - [`datagen`]: seeded simulators (Friedman, Ridgeway, FHT and response samplers).
//! - [`tuning`]: splitting, validation metrics, grid search and the benchmark runner.
//! - [`io`]: CSV ingestion/emission and the JSON model file.

pub mod boosting;
pub mod data;
pub mod datagen;
pub mod error;
pub mod io;
pub mod losses;
pub mod tree;
pub mod tuning;

pub use boosting::{fit, BoostedModel, FitConfig, UpdateMode};
pub use data::{Dataset, Matrix};
pub use error::{Error, Result};
pub use losses::{LossFamily, LossSpec, LossTriplet};
pub use tree::{LeafConstraint, RegressionTree, TreeConfig};
