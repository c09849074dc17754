mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crtnd_core::Error;

#[derive(Parser, Debug)]
#[command(name = "crtnd", version, about = "Randomization inference for cluster-randomized test-negative designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relative-risk estimators on a parallel-arm dataset.
    Analyze(AnalyzeArgs),
    /// Stepped-wedge log-contrast estimator.
    AnalyzeSw(AnalyzeSwArgs),
    /// Instrumental-variable dose-response slope.
    DoseResponse(DoseArgs),
    /// Parallel-arm (or dose-response) simulation study.
    Simulate(SimulateArgs),
    /// Stepped-wedge simulation study.
    SimulateSw(SimulateArgs),
    /// Parallel simulation repeated over independent ascertainment draws.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct OutputArgs {
    /// JSON report path; the report goes to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Tidy CSV summary path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct PermutationArgs {
    /// Permutation mode; `auto` enumerates small supports and samples
    /// otherwise.
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    /// Monte Carlo draws.
    #[arg(long, default_value_t = 10_000)]
    n_draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Largest support enumerated in exact mode.
    #[arg(long, default_value_t = crtnd_core::DEFAULT_ENUMERATION_CAP as u64)]
    cap: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = CiMethodArg::Normal)]
    ci_method: CiMethodArg,
    #[arg(long, value_enum, default_value_t = SearchArg::Grid)]
    search: SearchArg,
    #[command(flatten)]
    permutation: PermutationArgs,
    /// Add 0.5 to every count before taking logs.
    #[arg(long)]
    continuity_correction: bool,
    /// Comma-separated estimators; defaults to odds-ratio, tpf,
    /// log-contrast and (with covariates) covariate-adjusted.
    #[arg(long, value_enum, value_delimiter = ',')]
    estimators: Vec<EstimatorArg>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct AnalyzeSwArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = WeightsArg::Equal)]
    weights: WeightsArg,
    /// Weights, one per analysis period, separated by commas or whitespace.
    #[arg(long)]
    weights_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SigmaArg::Canonical)]
    sigma_convention: SigmaArg,
    #[arg(long)]
    continuity_correction: bool,
    /// Also run a permutation test of no effect with the chosen weights.
    #[arg(long)]
    permutation_test: bool,
    #[command(flatten)]
    permutation: PermutationArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DoseArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// `normal` inverts the Normal test in closed form; `invert-permutation`
    /// inverts permutation tests.
    #[arg(long, value_enum, default_value_t = CiMethodArg::Normal)]
    ci_method: CiMethodArg,
    #[arg(long, value_enum, default_value_t = SearchArg::Grid)]
    search: SearchArg,
    /// Adjust the test statistic for the covariates in the file.
    #[arg(long)]
    adjust_covariates: bool,
    #[command(flatten)]
    permutation: PermutationArgs,
    #[arg(long)]
    continuity_correction: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ScenarioArgs {
    /// Scenario TOML; the shipped default scenario is used when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario's relative risk.
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides the number of replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated estimators; defaults depend on the design.
    #[arg(long, value_enum, value_delimiter = ',')]
    estimators: Vec<SimEstimatorArg>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Start from the shipped dose-response scenario (simulate only).
    #[arg(long)]
    dose: bool,
    /// Per-replicate CSV of estimates and decisions.
    #[arg(long)]
    raw: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of independent ascertainment configurations.
    #[arg(long, default_value_t = 100)]
    configs: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CiMethodArg {
    Normal,
    InvertPermutation,
    InvertNormal,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SearchArg {
    Grid,
    Bisection,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EstimatorArg {
    OddsRatio,
    Tpf,
    LogContrast,
    CovariateAdjusted,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SimEstimatorArg {
    OddsRatio,
    Tpf,
    LogContrast,
    CovariateAdjusted,
    LogContrastPermutation,
    DoseResponse,
    SwEqual,
    SwOptimal,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum WeightsArg {
    Equal,
    Optimal,
    File,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SigmaArg {
    Canonical,
    Printed,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "ValidationError",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_validation() { 2 } else { 3 },
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::AnalyzeSw(a) => commands::analyze_sw(a),
        Command::DoseResponse(a) => commands::dose_response(a),
        Command::Simulate(a) => commands::simulate(a, false),
        Command::SimulateSw(a) => commands::simulate(a, true),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let body = serde_json::json!({
                "error": { "kind": f.kind, "message": f.message, "exit_code": f.code }
            });
            eprintln!("{body}");
            ExitCode::from(f.code)
        }
    }
}
