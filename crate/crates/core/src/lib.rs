//! Randomization inference for cluster-randomized test-negative designs.
//!
//! Clusters report counts of test-positive (`y`) and test-negative (`z`)
//! healthcare seekers. The crate provides the parallel-arm estimators
//! (odds ratio, test-positive fraction, log-contrast and its covariate
//! adjusted version), exact and Monte Carlo permutation tests, test
//! inversion, instrumental-variable dose-response analysis, the
//! stepped-wedge log-contrast estimator with optimal weights, and a
//! simulation harness.

pub mod analysis;
pub mod assignment;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod io;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod stepped_wedge;

pub use assignment::{Assignment, AssignmentScheme, DEFAULT_ENUMERATION_CAP};
pub use error::{Error, Result};
pub use estimators::{AnalysisOptions, CiMethod, EstimateReport, Interval, Method};
pub use model::{
    ClusterPeriodRecord, ClusterRecord, Panel, PanelPotentialTable, ParallelData,
    PotentialCluster, PotentialTable,
};
