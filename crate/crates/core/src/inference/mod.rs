//! Likelihood evaluation and parameter estimation.

pub mod fit;
pub mod likelihood;
pub mod newton;
pub mod random_effects;

pub use fit::{
    default_init, fit, wald_ci, CovarianceSource, FitOptions, FitResult, ParameterEstimate,
};
pub use likelihood::{loglik, loglik_score_info, EvalLevel, Evaluation, Likelihood};
pub use random_effects::{fit_random_effects, RandomEffectsSpec, VarianceSpec};
