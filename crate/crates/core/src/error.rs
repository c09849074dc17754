use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("cluster {cluster_id}: zero count makes the log-contrast undefined (enable continuity correction to proceed)")]
    ZeroCount { cluster_id: String },

    #[error("arm-level total {which} is zero")]
    ZeroArmTotal { which: &'static str },

    #[error("cluster {cluster_id} has no test-positive or test-negative observations")]
    EmptyCluster { cluster_id: String },

    #[error("total test-positive count is zero")]
    ZeroPositiveTotal,

    #[error("no admissible root: T = {t} is outside the attainable range for r = {r}")]
    NoAdmissibleRoot { t: f64, r: f64 },

    #[error("ambiguous root for T = {t}, r = {r}: two positive solutions survive")]
    AmbiguousRoot { t: f64, r: f64 },

    #[error("{arm} has {size} clusters, at least {required} required")]
    ArmTooSmall {
        arm: String,
        size: usize,
        required: usize,
    },

    #[error("covariate design matrix is rank deficient in the {arm} arm")]
    RankDeficientCovariates { arm: &'static str },

    #[error("cluster {cluster_id} has no dose")]
    MissingDose { cluster_id: String },

    #[error("dose is constant across clusters; the instrument has no variation to exploit")]
    ConstantDose,

    #[error("assignment support has {total} elements, above the enumeration cap of {cap}")]
    SupportTooLarge { total: String, cap: u128 },

    #[error("statistic undefined: {0}")]
    StatisticUndefined(String),

    #[error("no null value in [{low}, {high}] escapes rejection at alpha = {alpha}")]
    NoNonRejectedPoint { low: f64, high: f64, alpha: f64 },

    #[error("p-value is not unimodal over the search range")]
    NonUnimodalPValue,

    #[error("confidence set is unbounded")]
    UnboundedConfidenceSet,

    #[error("covariance matrix is singular or ill-conditioned (condition number {condition:e})")]
    SingularCovariance { condition: f64 },

    #[error("panel is incomplete: cluster {cluster_id} has no record for period {period}")]
    IncompletePanel { cluster_id: String, period: usize },

    #[error("covariance entry ({t1}, {t2}): chosen group '{group}' has {size} clusters, at least 2 required")]
    GroupTooSmall {
        t1: usize,
        t2: usize,
        group: &'static str,
        size: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid assignment scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("{degenerate} of {total} replicates were degenerate (limit 1%)")]
    DegenerateReplicateLimit { degenerate: usize, total: usize },

    #[error("line {line}, column {column}: {reason}")]
    Parse {
        line: u64,
        column: String,
        reason: String,
    },

    #[error("schema error: missing columns [{}], unknown columns [{}]", missing.join(", "), unknown.join(", "))]
    Schema {
        missing: Vec<String>,
        unknown: Vec<String>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by malformed input rather than by the computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Schema { .. }
                | Error::IncompletePanel { .. }
                | Error::InvalidScheme(_)
                | Error::InvalidInput(_)
                | Error::InvalidScenario(_)
                | Error::DimensionMismatch { .. }
                | Error::MissingDose { .. }
                | Error::Io(_)
        )
    }

    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroCount { .. } => "ZeroCount",
            Error::ZeroArmTotal { .. } => "ZeroArmTotal",
            Error::EmptyCluster { .. } => "EmptyCluster",
            Error::ZeroPositiveTotal => "ZeroPositiveTotal",
            Error::NoAdmissibleRoot { .. } => "NoAdmissibleRoot",
            Error::AmbiguousRoot { .. } => "AmbiguousRoot",
            Error::ArmTooSmall { .. } => "ArmTooSmall",
            Error::RankDeficientCovariates { .. } => "RankDeficientCovariates",
            Error::MissingDose { .. } => "MissingDose",
            Error::ConstantDose => "ConstantDose",
            Error::SupportTooLarge { .. } => "SupportTooLarge",
            Error::StatisticUndefined(_) => "StatisticUndefined",
            Error::NoNonRejectedPoint { .. } => "NoNonRejectedPoint",
            Error::NonUnimodalPValue => "NonUnimodalPValue",
            Error::UnboundedConfidenceSet => "UnboundedConfidenceSet",
            Error::SingularCovariance { .. } => "SingularCovariance",
            Error::IncompletePanel { .. } => "IncompletePanel",
            Error::GroupTooSmall { .. } => "GroupTooSmall",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidScheme(_) => "InvalidScheme",
            Error::InvalidInput(_) => "InvalidInput",
            Error::InvalidScenario(_) => "InvalidScenario",
            Error::DegenerateReplicateLimit { .. } => "DegenerateReplicateLimit",
            Error::Parse { .. } => "ParseError",
            Error::Schema { .. } => "SchemaError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
