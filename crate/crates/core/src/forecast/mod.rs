//! One-step-ahead forecasting, proper scoring rules, paired permutation
//! tests, PIT histograms and the dominant eigenvalue path.

pub mod eigen;
pub mod permutation;
pub mod pit;
pub mod rolling;
pub mod scores;

pub use eigen::{dominant_eigenvalue_path, spectral_radius, transition_matrix};
pub use permutation::{permutation_test, PermutationResult, DEFAULT_PERMUTATIONS};
pub use pit::{pit_histogram, PitHistogram};
pub use rolling::{one_step_ahead, OneStepForecast};
pub use scores::{
    dawid_sebastiani_score, log_score, ranked_probability_score, MeanScores,
    PredictiveDistribution, ScoreRecord, ScoreTable, ScoringRule, RPS_EPSILON,
};
