//! Endemic-epidemic models for multivariate time series of infectious disease
//! counts, with estimable power-law (or order-factor) neighbourhood weights.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forecast;
pub mod graph;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod simulation;
pub mod special;
pub mod weights;

pub use error::{Error, Result};
pub use forecast::{
    dawid_sebastiani_score, dominant_eigenvalue_path, log_score, one_step_ahead, permutation_test,
    pit_histogram, ranked_probability_score, PermutationResult,
};
pub use graph::{RegionGraph, UNREACHABLE};
pub use inference::{
    fit, fit_random_effects, loglik_score_info, wald_ci, FitOptions, RandomEffectsSpec,
};
pub use model::{conditional_mean, log_pmf, Component, ComponentSpec, Family, InterceptKind};
pub use scalar::Scalar;
pub use simulation::{
    aggregate_paths, final_size_summary, simulate_panel, simulate_paths, AggregateAxis,
    SimulationBundle,
};

pub type SurveillanceCounts = model::SurveillanceCounts<f64>;
pub type ModelSpec = model::ModelSpec<f64>;
pub type ParameterVector = model::ParameterVector<f64>;
pub type WeightSpec = weights::WeightSpec<f64>;
pub type WeightKind = weights::WeightKind<f64>;
pub type FitResult = inference::FitResult<f64>;
pub type PredictiveDistribution = forecast::PredictiveDistribution<f64>;
pub type ScoreTable = forecast::ScoreTable<f64>;
pub type PitHistogram = forecast::PitHistogram<f64>;
