//! Match outcome prediction with Gaussian process classification.
//!
//! Matches are compared through the players they put on the field: the
//! covariance of two match outcomes is the signed overlap of their starting
//! lineups (the player kernel). Win/draw/loss results enter through the
//! Rao–Kupper likelihood, inference uses the Laplace approximation, and
//! predictions are averaged over latent uncertainty.
//!
//! Modules:
//! - [`data`]: match records, CSV parsing, chronological splits
//! - [`kernel`]: sparse match vectors, kernel matrices, heatmap export
//! - [`rao_kupper`]: ternary likelihood and its derivatives
//! - [`gp`]: Laplace fit, evidence, prediction, hyperparameter search, model files
//! - [`baselines`]: Elo, odds and uniform predictors, weight-space oracle
//! - [`eval`]: log loss and multi-model reports
//! - [`sim`]: synthetic leagues with known skills

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod gp;
pub mod kernel;
pub mod quadrature;
pub mod rao_kupper;
pub mod sim;

pub use data::{Dataset, Home, MatchRecord, Outcome, PlayerId, Registry};
pub use error::{Error, Result};
pub use gp::{Hyperparams, LaplacePosterior};
pub use kernel::{KernelParams, MatchVector};
pub use rao_kupper::{DrawParam, PredictiveDistribution};
