//! Randomization and Normal-approximation inference.

mod dose;
mod invert;
mod normal;
mod null;
mod permutation;

pub use dose::{
    dose_response_estimate, dose_response_test, DoseInference, DoseLinearization, DoseOptions,
};
pub use invert::{invert_ci, invert_permutation_ci, Inversion, SearchMethod, DEFAULT_GRID_POINTS};
pub use normal::normal_test;
pub use null::{impute_null_counts, impute_null_outcomes, NullAdjustment, NullKind, NullSpec};
pub use permutation::{
    exact_difference_in_means_test, odds_ratio_permutation_sd, permutation_distribution_test,
    permutation_test, PermutationMode, PermutationResult, Statistic,
};
