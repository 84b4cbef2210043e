//! Shortcut-mitigation penalties for linear heads over concept features.
//!
//! The crate fits `ŷ = β_cᵀC + β_uᵀU + β_sᵀS` under five penalties
//! ([`PenaltySpec`]), checks when each one drives the shortcut weight `β_s` to
//! zero ([`theory`]), and runs the synthetic experiments ([`harness`]).

pub mod dataset;
pub mod error;
pub mod mlp;
pub mod eval;
pub mod harness;
pub mod regularizers;
pub mod rng;
pub mod solver;
pub mod theory;

pub use dataset::{generate_synthetic, read_dataset, standardize, write_dataset, Dataset, DatasetSpec, Role, ShortcutKind, StandardizeStats};
pub use error::{Error, Result};
pub use eval::{estimate_treatment_effect, Predictor};
pub use regularizers::{causal_weights, penalty_subgradient, penalty_value, ModelParams, PenaltySpec};
pub use solver::{fit_closed_form, fit_iterative, predict, TrainConfig, TrainTrace};
pub use theory::{OracleResult, ScalarProblem};
pub use harness::{ExperimentConfig, ResultRow, Table};
