//! Replicate-level evaluation and the summary metrics.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::{ParallelBaseline, SteppedWedgeBaseline};
use super::dgp::{ParallelGenerator, ParallelReplicate, SteppedWedgeGenerator, SteppedWedgeReplicate};
use super::scenario::{BaselineSource, SimScenario};
use crate::error::{Error, Result};
use crate::estimators::{
    covariate_adjusted_estimate, log_contrast_estimate, odds_ratio_estimate, tpf_estimate,
    AnalysisOptions, EstimateReport,
};
use crate::inference::{
    dose_response_test, exact_difference_in_means_test, impute_null_outcomes,
    odds_ratio_permutation_sd, permutation_test, NullAdjustment, NullSpec, PermutationMode,
    Statistic,
};
use crate::rng::{self, domain};
use crate::stats;
use crate::stepped_wedge::{
    optimal_weight_vector, period_contrasts, sw_covariance_estimate, sw_oracle_covariance,
    sw_report, SigmaConvention, SwWeights, WeightKind, DEFAULT_CONDITION_LIMIT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEstimator {
    /// Odds ratio with the permutation-dispersion SE.
    OddsRatio,
    /// Test-positive fraction; tests and coverage from Monte Carlo
    /// permutation tests of the centered statistic.
    TestPositiveFraction,
    LogContrast,
    /// Log-contrast with estimated covariate adjustment.
    CovariateAdjusted,
    /// Log-contrast estimate with exact permutation tests; coverage is that
    /// of the inverted test.
    LogContrastPermutation,
    DoseResponse,
    SwEqual,
    /// Optimal weights computed from the known control log-contrasts.
    SwOptimal,
}

impl SimEstimator {
    pub fn name(self) -> &'static str {
        match self {
            SimEstimator::OddsRatio => "odds_ratio",
            SimEstimator::TestPositiveFraction => "test_positive_fraction",
            SimEstimator::LogContrast => "log_contrast",
            SimEstimator::CovariateAdjusted => "covariate_adjusted",
            SimEstimator::LogContrastPermutation => "log_contrast_permutation",
            SimEstimator::DoseResponse => "dose_response",
            SimEstimator::SwEqual => "sw_equal",
            SimEstimator::SwOptimal => "sw_optimal",
        }
    }

    pub fn parallel_defaults() -> Vec<SimEstimator> {
        vec![
            SimEstimator::OddsRatio,
            SimEstimator::TestPositiveFraction,
            SimEstimator::LogContrast,
            SimEstimator::CovariateAdjusted,
            SimEstimator::LogContrastPermutation,
        ]
    }

    pub fn stepped_wedge_defaults() -> Vec<SimEstimator> {
        vec![SimEstimator::SwEqual, SimEstimator::SwOptimal]
    }

    /// Default estimator set for a scenario.
    pub fn defaults_for(scenario: &SimScenario) -> Vec<SimEstimator> {
        if scenario.is_stepped_wedge() {
            Self::stepped_wedge_defaults()
        } else if scenario.dose.is_some() {
            vec![SimEstimator::DoseResponse]
        } else {
            Self::parallel_defaults()
        }
    }

    fn is_stepped_wedge(self) -> bool {
        matches!(self, SimEstimator::SwEqual | SimEstimator::SwOptimal)
    }
}

/// Outcome of one estimator on one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub estimate: f64,
    pub se: Option<f64>,
    /// Null of no effect rejected at `alpha`.
    pub reject: bool,
    /// Interval (or inverted test) covers the truth.
    pub covers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario_id: String,
    pub estimator: SimEstimator,
    pub lambda: f64,
    /// `log(lambda)`, or the dose slope for dose-response rows.
    pub truth: f64,
    pub bias: f64,
    /// Standard deviation of the estimates.
    pub se: f64,
    /// Mean of the SE estimates.
    pub ase: Option<f64>,
    pub por: f64,
    pub cp: f64,
    pub n_effective: usize,
    pub n_failed: usize,
    /// Monte Carlo standard error of `bias`.
    pub bias_mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub estimator: SimEstimator,
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scenario_id: String,
    pub n_replicates: usize,
    pub n_degenerate: usize,
    pub rows: Vec<MetricsRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<ReplicateRecord>>,
}

/// Baseline tables for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Baselines {
    pub parallel: ParallelBaseline,
    pub stepped_wedge: Option<SteppedWedgeBaseline>,
}

impl Baselines {
    pub fn builtin() -> Self {
        Baselines {
            parallel: ParallelBaseline::builtin(),
            stepped_wedge: Some(SteppedWedgeBaseline::builtin()),
        }
    }

    /// Loads the tables named by `source`, resolving relative paths against
    /// `base_dir`.
    pub fn load(source: &BaselineSource, base_dir: Option<&Path>) -> Result<Self> {
        match source {
            BaselineSource::Builtin => Ok(Self::builtin()),
            BaselineSource::File {
                parallel,
                stepped_wedge,
            } => {
                let read = |p: &str| -> Result<String> {
                    let path = match base_dir {
                        Some(d) => d.join(p),
                        None => Path::new(p).to_path_buf(),
                    };
                    std::fs::read_to_string(&path)
                        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
                };
                let parallel = ParallelBaseline::from_csv(&read(parallel)?)?;
                let stepped_wedge = match stepped_wedge {
                    Some(p) => Some(SteppedWedgeBaseline::from_csv(&read(p)?, &parallel)?),
                    None => None,
                };
                Ok(Baselines {
                    parallel,
                    stepped_wedge,
                })
            }
        }
    }
}

struct Context {
    alpha: f64,
    z: f64,
    truth: f64,
    lambda: f64,
    seed: u64,
    draws: usize,
}

impl Context {
    fn analysis_seed(&self, r: usize, k: u64) -> u64 {
        rng::derive_seed(self.seed, &[domain::ANALYSIS, r as u64, k])
    }

    fn normal(&self, report: &EstimateReport) -> Option<Outcome> {
        let se = report.se_log?;
        let est = report.log_estimate;
        Some(Outcome {
            estimate: est,
            se: Some(se),
            reject: report.p_value? <= self.alpha,
            covers: (est - self.truth).abs() <= self.z * se,
        })
    }
}

fn parallel_outcome(
    ctx: &Context,
    rep: &ParallelReplicate,
    estimator: SimEstimator,
) -> Result<Outcome> {
    let data = &rep.data;
    let opts = AnalysisOptions {
        alpha: ctx.alpha,
        continuity_correction: false,
    };
    let missing = || Error::StatisticUndefined("no standard error".into());
    match estimator {
        SimEstimator::OddsRatio => {
            let est = odds_ratio_estimate(data, &opts)?.log_estimate;
            let mode = PermutationMode::monte_carlo(ctx.draws, ctx.analysis_seed(rep.index, 0));
            let se = odds_ratio_permutation_sd(data, mode)?;
            Ok(Outcome {
                estimate: est,
                se: Some(se),
                reject: est.abs() > ctx.z * se,
                covers: (est - ctx.truth).abs() <= ctx.z * se,
            })
        }
        SimEstimator::TestPositiveFraction => {
            let est = tpf_estimate(data, &opts)?.log_estimate;
            let mode = PermutationMode::monte_carlo(ctx.draws, ctx.analysis_seed(rep.index, 1));
            let p = |lambda0: f64| -> Result<f64> {
                let null = NullSpec::relative_risk(lambda0)?;
                Ok(permutation_test(data, &null, Statistic::Tpf, mode, false)?.p_two_sided)
            };
            Ok(Outcome {
                estimate: est,
                se: None,
                reject: p(1.0)? <= ctx.alpha,
                covers: p(ctx.lambda)? > ctx.alpha,
            })
        }
        SimEstimator::LogContrast => ctx.normal(&log_contrast_estimate(data, &opts)?).ok_or_else(missing),
        SimEstimator::CovariateAdjusted => ctx
            .normal(&covariate_adjusted_estimate(data, None, &opts)?.0)
            .ok_or_else(missing),
        SimEstimator::LogContrastPermutation => {
            let report = log_contrast_estimate(data, &opts)?;
            let treated = data.treated();
            let p = |lambda0: f64| -> Result<f64> {
                let u = impute_null_outcomes(data, &NullSpec::relative_risk(lambda0)?, false)?;
                Ok(exact_difference_in_means_test(&u, &treated, u64::MAX)?.p_two_sided)
            };
            Ok(Outcome {
                estimate: report.log_estimate,
                se: report.se_log,
                reject: p(1.0)? <= ctx.alpha,
                covers: p(ctx.lambda)? > ctx.alpha,
            })
        }
        SimEstimator::DoseResponse => {
            let report = dose_response_test(data, 0.0, NullAdjustment::None, &opts)?;
            Ok(Outcome {
                estimate: report.log_estimate,
                se: report.se_log,
                reject: report.p_value.ok_or_else(missing)? <= ctx.alpha,
                // an unbounded confidence set covers everything
                covers: report.ci.as_ref().is_none_or(|ci| ci.contains(ctx.truth)),
            })
        }
        SimEstimator::SwEqual | SimEstimator::SwOptimal => Err(Error::InvalidScenario(format!(
            "{} needs a stepped-wedge design",
            estimator.name()
        ))),
    }
}

fn stepped_wedge_outcome(
    ctx: &Context,
    rep: &SteppedWedgeReplicate,
    estimator: SimEstimator,
) -> Result<Outcome> {
    let (periods, d) = period_contrasts(&rep.panel, false)?;
    let sigma_hat = sw_covariance_estimate(&rep.panel, false, SigmaConvention::Canonical)?;
    let weights = match estimator {
        SimEstimator::SwEqual => SwWeights::equal(periods.len()),
        SimEstimator::SwOptimal => {
            let l0 = rep.table.control_log_contrasts()?;
            let scheme = crate::assignment::AssignmentScheme::stepped_wedge(rep.panel.start_counts())?;
            let oracle = sw_oracle_covariance(&l0, &scheme, SigmaConvention::Canonical)?;
            SwWeights {
                w: optimal_weight_vector(&oracle.matrix(), DEFAULT_CONDITION_LIMIT)?,
                kind: WeightKind::OptimalOracle,
            }
        }
        _ => {
            return Err(Error::InvalidScenario(format!(
                "{} needs a parallel design",
                estimator.name()
            )))
        }
    };
    let report = sw_report(&d, &weights, &sigma_hat, ctx.alpha);
    ctx.normal(&report)
        .ok_or_else(|| Error::StatisticUndefined("negative variance estimate".into()))
}

fn aggregate(
    scenario: &SimScenario,
    estimator: SimEstimator,
    truth: f64,
    outcomes: impl Iterator<Item = Option<Outcome>>,
) -> MetricsRow {
    let (mut est, mut ses) = (Vec::new(), Vec::new());
    let (mut reject, mut covers, mut failed) = (0usize, 0usize, 0usize);
    for o in outcomes {
        match o {
            Some(o) => {
                est.push(o.estimate);
                if let Some(se) = o.se {
                    ses.push(se);
                }
                reject += o.reject as usize;
                covers += o.covers as usize;
            }
            None => failed += 1,
        }
    }
    let n = est.len();
    let sd = if n > 1 { stats::sample_variance(&est).sqrt() } else { 0.0 };
    MetricsRow {
        scenario_id: scenario.id.clone(),
        estimator,
        lambda: scenario.lambda,
        truth,
        bias: if n > 0 { stats::mean(&est) - truth } else { f64::NAN },
        se: sd,
        ase: (!ses.is_empty()).then(|| stats::mean(&ses)),
        por: if n > 0 { reject as f64 / n as f64 } else { f64::NAN },
        cp: if n > 0 { covers as f64 / n as f64 } else { f64::NAN },
        n_effective: n,
        n_failed: failed,
        bias_mc_se: if n > 0 { sd / (n as f64).sqrt() } else { f64::NAN },
    }
}

/// Runs every replicate of `scenario` and summarizes each estimator.
///
/// Replicates run in parallel but are collected in index order and
/// aggregated sequentially, so the output does not depend on the number of
/// threads.
pub fn evaluate(
    scenario: &SimScenario,
    baselines: &Baselines,
    estimators: &[SimEstimator],
    keep_raw: bool,
) -> Result<Evaluation> {
    scenario.validate()?;
    if estimators.is_empty() {
        return Err(Error::InvalidScenario("no estimators requested".into()));
    }
    for &e in estimators {
        let fits = if scenario.is_stepped_wedge() {
            e.is_stepped_wedge()
        } else if scenario.dose.is_some() {
            e == SimEstimator::DoseResponse
        } else {
            !e.is_stepped_wedge() && e != SimEstimator::DoseResponse
        };
        if !fits {
            return Err(Error::InvalidScenario(format!(
                "estimator {} does not apply to scenario {}",
                e.name(),
                scenario.id
            )));
        }
    }
    let truth = match &scenario.dose {
        Some(d) => d.beta,
        None => scenario.lambda.ln(),
    };
    let ctx = Context {
        alpha: scenario.alpha,
        z: stats::normal_critical(scenario.alpha),
        truth,
        lambda: scenario.lambda,
        seed: scenario.seed,
        draws: scenario.permutation_draws,
    };
    let n = scenario.n_replicates;
    let per_replicate: Vec<Option<Vec<Option<Outcome>>>> = if scenario.is_stepped_wedge() {
        let baseline = baselines.stepped_wedge.as_ref().ok_or_else(|| {
            Error::InvalidScenario("scenario needs a stepped-wedge baseline".into())
        })?;
        let g = SteppedWedgeGenerator::new(scenario, baseline)?;
        (0..n)
            .into_par_iter()
            .map(|r| {
                Ok(g.replicate(r)?.map(|rep| {
                    estimators
                        .iter()
                        .map(|&e| stepped_wedge_outcome(&ctx, &rep, e).ok())
                        .collect()
                }))
            })
            .collect::<Result<_>>()?
    } else {
        let g = ParallelGenerator::new(scenario, &baselines.parallel)?;
        (0..n)
            .into_par_iter()
            .map(|r| {
                Ok(g.replicate(r)?.map(|rep| {
                    estimators
                        .iter()
                        .map(|&e| parallel_outcome(&ctx, &rep, e).ok())
                        .collect()
                }))
            })
            .collect::<Result<_>>()?
    };
    let n_degenerate = per_replicate.iter().filter(|r| r.is_none()).count();
    if n_degenerate as f64 > scenario.degenerate_limit * n as f64 {
        return Err(Error::DegenerateReplicateLimit {
            degenerate: n_degenerate,
            total: n,
        });
    }
    let rows = estimators
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            aggregate(
                scenario,
                e,
                truth,
                per_replicate.iter().flatten().map(|o| o[k]),
            )
        })
        .collect();
    let raw = keep_raw.then(|| {
        per_replicate
            .iter()
            .enumerate()
            .filter_map(|(r, o)| o.as_ref().map(|o| (r, o)))
            .flat_map(|(r, o)| {
                estimators
                    .iter()
                    .zip(o)
                    .map(move |(&e, &outcome)| ReplicateRecord {
                        replicate: r,
                        estimator: e,
                        outcome,
                    })
            })
            .collect()
    });
    Ok(Evaluation {
        scenario_id: scenario.id.clone(),
        n_replicates: n,
        n_degenerate,
        rows,
        raw,
    })
}
