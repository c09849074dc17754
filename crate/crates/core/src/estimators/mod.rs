//! Parallel-arm point estimators of the relative risk and their variance
//! estimators.

mod contrast;
mod odds_ratio;
mod report;
mod tpf;

pub use contrast::{
    covariate_adjusted_estimate, log_contrast_estimate, optimal_beta, Adjustment, ContrastDesign,
    ContrastFit, CovariateFit,
};
pub use odds_ratio::{odds_ratio_bias, odds_ratio_estimate, odds_ratio_from_counts};
pub use report::{AnalysisOptions, CiMethod, EstimateReport, Interval, Method};
pub use tpf::{
    tpf_bias_decomposition, tpf_estimate, tpf_expected, tpf_solve, tpf_statistic,
    tpf_statistic_from_counts, TpfBiasDecomposition,
};
