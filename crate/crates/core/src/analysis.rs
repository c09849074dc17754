//! One-call analysis of a parallel-arm dataset with a chosen set of
//! estimators and interval method.

use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentScheme;
use crate::error::{Error, Result};
use crate::estimators::{
    covariate_adjusted_estimate, log_contrast_estimate, odds_ratio_estimate, tpf_estimate,
    AnalysisOptions, CiMethod, EstimateReport, Method,
};
use crate::inference::{
    invert_ci, invert_permutation_ci, normal_test, odds_ratio_permutation_sd, permutation_test,
    NullSpec, PermutationMode, SearchMethod, Statistic,
};
use crate::model::ParallelData;
use crate::DEFAULT_ENUMERATION_CAP;

/// Supports up to this size are enumerated in `Auto` mode for statistics
/// without the split-half shortcut.
pub const AUTO_EXACT_LIMIT: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    /// Wald intervals; the TPF estimator has no standard error and always
    /// uses permutation inversion.
    #[default]
    Normal,
    InvertNormal,
    InvertPermutation,
}

/// Requested permutation mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ModeChoice {
    /// Exact when the support is cheap to enumerate for the statistic,
    /// Monte Carlo otherwise.
    Auto { n_draws: usize, seed: u64 },
    Exact { cap: u64 },
    MonteCarlo { n_draws: usize, seed: u64 },
}

impl Default for ModeChoice {
    fn default() -> Self {
        ModeChoice::Auto {
            n_draws: 10_000,
            seed: 1,
        }
    }
}

impl ModeChoice {
    /// Concrete mode for `statistic` on `data`. The difference in means
    /// without covariates is counted exactly by splitting the clusters into
    /// halves, so it stays exact far beyond [`AUTO_EXACT_LIMIT`].
    pub fn resolve(self, data: &ParallelData, statistic: Statistic, covariates: bool) -> PermutationMode {
        match self {
            ModeChoice::Exact { cap } => PermutationMode::Exact { cap },
            ModeChoice::MonteCarlo { n_draws, seed } => PermutationMode::MonteCarlo { n_draws, seed },
            ModeChoice::Auto { n_draws, seed } => {
                let total = AssignmentScheme::parallel(data.m(), data.m1())
                    .ok()
                    .and_then(|s| s.total_assignments())
                    .unwrap_or(u128::MAX);
                let split_half = statistic == Statistic::Contrast && !covariates && data.m() <= 40;
                let limit = if split_half { DEFAULT_ENUMERATION_CAP } else { AUTO_EXACT_LIMIT };
                if total <= limit {
                    PermutationMode::Exact { cap: limit as u64 }
                } else {
                    PermutationMode::MonteCarlo { n_draws, seed }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub estimators: Vec<Method>,
    pub analysis: AnalysisOptions,
    pub interval: IntervalMethod,
    pub mode: ModeChoice,
    pub search: SearchMethod,
}

impl AnalyzeOptions {
    /// Odds ratio, TPF and log-contrast, plus the covariate-adjusted
    /// estimator when the data carry covariates.
    pub fn default_estimators(data: &ParallelData) -> Vec<Method> {
        let mut v = vec![Method::OddsRatio, Method::Tpf, Method::LogContrast];
        if data.n_covariates() > 0 {
            v.push(Method::CovariateAdjusted);
        }
        v
    }
}

fn mode_value(mode: PermutationMode) -> serde_json::Value {
    serde_json::to_value(mode).unwrap_or_default()
}

fn set_inverted(report: &mut EstimateReport, low: f64, high: f64, method: CiMethod, warnings: Vec<String>) {
    report.ci = Some(report.natural_interval(low, high));
    report.ci_method = Some(method);
    for w in warnings {
        report.warn(w);
    }
}

/// Permutation p-value of `lambda = 1` and the inverted interval.
fn permutation_inference(
    report: &mut EstimateReport,
    data: &ParallelData,
    statistic: Statistic,
    covariates: bool,
    opts: &AnalyzeOptions,
    scale: f64,
) -> Result<()> {
    let mode = opts.mode.resolve(data, statistic, covariates);
    let correction = opts.analysis.continuity_correction;
    let mut null = NullSpec::relative_risk(1.0)?;
    if covariates {
        null = null.with_covariates();
    }
    report.p_value = Some(permutation_test(data, &null, statistic, mode, correction)?.p_two_sided);
    report.null_value = Some(0.0);
    report.diagnose("permutation_mode", mode_value(mode));
    let inv = invert_permutation_ci(
        data,
        statistic,
        covariates,
        mode,
        correction,
        report.log_estimate,
        scale,
        opts.analysis.alpha,
        opts.search,
    );
    match inv {
        Ok(inv) => set_inverted(report, inv.low, inv.high, CiMethod::Permutation, inv.warnings),
        Err(e @ (Error::UnboundedConfidenceSet | Error::NoNonRejectedPoint { .. })) => {
            report.ci = None;
            report.warn(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn analyze_one(data: &ParallelData, method: Method, opts: &AnalyzeOptions) -> Result<EstimateReport> {
    let a = &opts.analysis;
    match method {
        Method::OddsRatio => {
            let mut report = odds_ratio_estimate(data, a)?;
            let mode = opts.mode.resolve(data, Statistic::OddsRatio, false);
            let se = odds_ratio_permutation_sd(data, mode)?;
            report.diagnose("se_source", "permutation distribution with counts held fixed");
            if opts.interval == IntervalMethod::InvertPermutation {
                report.se_log = Some(se);
                permutation_inference(&mut report, data, Statistic::OddsRatio, false, opts, se)?;
                Ok(report)
            } else {
                report.diagnose("permutation_mode", mode_value(mode));
                Ok(report.with_normal_inference(se, 0.0, CiMethod::Normal))
            }
        }
        Method::Tpf => {
            let mut report = tpf_estimate(data, a)?;
            let scale = log_contrast_estimate(data, a)
                .ok()
                .and_then(|r| r.se_log)
                .filter(|s| *s > 0.0)
                .unwrap_or(1.0);
            permutation_inference(&mut report, data, Statistic::Tpf, false, opts, scale)?;
            Ok(report)
        }
        Method::LogContrast | Method::CovariateAdjusted => {
            let covariates = method == Method::CovariateAdjusted;
            let mut report = if covariates {
                covariate_adjusted_estimate(data, None, a)?.0
            } else {
                log_contrast_estimate(data, a)?
            };
            let se = report.se_log.unwrap_or(0.0);
            match opts.interval {
                IntervalMethod::Normal => {}
                IntervalMethod::InvertNormal => {
                    let p = |theta: f64| -> Result<f64> {
                        let r = normal_test(data, &NullSpec::relative_risk(theta.exp())?, method, a)?;
                        Ok(r.p_value.unwrap_or(0.0))
                    };
                    let inv = invert_ci(p, report.log_estimate, se.max(1e-8), a.alpha, opts.search, None)?;
                    set_inverted(&mut report, inv.low, inv.high, CiMethod::TestInversion, inv.warnings);
                }
                IntervalMethod::InvertPermutation => {
                    permutation_inference(
                        &mut report,
                        data,
                        Statistic::Contrast,
                        covariates,
                        opts,
                        se.max(1e-8),
                    )?;
                }
            }
            Ok(report)
        }
        Method::DoseResponse | Method::SwLogContrast => Err(Error::InvalidInput(format!(
            "{} is not a parallel relative-risk estimator",
            method.name()
        ))),
    }
}

/// Runs every requested estimator. The first failing estimator aborts the
/// analysis.
pub fn analyze_parallel(data: &ParallelData, opts: &AnalyzeOptions) -> Result<Vec<EstimateReport>> {
    if !(opts.analysis.alpha > 0.0 && opts.analysis.alpha < 0.5) {
        return Err(Error::InvalidInput(format!(
            "alpha must be in (0, 0.5), got {}",
            opts.analysis.alpha
        )));
    }
    opts.estimators
        .iter()
        .map(|&m| analyze_one(data, m, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClusterRecord;

    fn symmetric() -> ParallelData {
        let mut recs = Vec::new();
        for (k, (y, z)) in [(10.0, 40.0), (20.0, 50.0), (15.0, 30.0), (30.0, 60.0)].iter().enumerate() {
            recs.push(ClusterRecord::new(format!("t{k}"), true, *y, *z).with_covariates(vec![k as f64]));
            recs.push(ClusterRecord::new(format!("c{k}"), false, *y, *z).with_covariates(vec![k as f64 + 0.5]));
        }
        ParallelData::new(recs).unwrap()
    }

    fn options(data: &ParallelData, interval: IntervalMethod) -> AnalyzeOptions {
        AnalyzeOptions {
            estimators: AnalyzeOptions::default_estimators(data),
            analysis: AnalysisOptions::default(),
            interval,
            mode: ModeChoice::default(),
            search: SearchMethod::default(),
        }
    }

    #[test]
    fn symmetric_null_gives_unit_estimates() {
        let d = symmetric();
        for interval in [IntervalMethod::Normal, IntervalMethod::InvertPermutation] {
            let reports = analyze_parallel(&d, &options(&d, interval)).unwrap();
            assert_eq!(reports.len(), 4);
            for r in reports.iter().filter(|r| r.method != Method::CovariateAdjusted) {
                assert!((r.estimate() - 1.0).abs() < 1e-12, "{:?}", r.method);
                let ci = r.ci.unwrap();
                assert!(ci.low <= 1.0 && 1.0 <= ci.high, "{:?}", r.method);
            }
        }
    }

    #[test]
    fn inverted_normal_matches_closed_form() {
        let d = symmetric();
        let mut o = options(&d, IntervalMethod::InvertNormal);
        o.estimators = vec![Method::LogContrast];
        let inv = analyze_parallel(&d, &o).unwrap().remove(0).ci.unwrap();
        o.interval = IntervalMethod::Normal;
        let closed = analyze_parallel(&d, &o).unwrap().remove(0).ci.unwrap();
        let r = log_contrast_estimate(&d, &AnalysisOptions::default()).unwrap();
        let step = 20.0 * r.se_log.unwrap() / 2000.0;
        assert!((inv.low.ln() - closed.low.ln()).abs() <= step);
        assert!((inv.high.ln() - closed.high.ln()).abs() <= step);
    }

    #[test]
    fn auto_mode_resolution() {
        let d = symmetric();
        assert!(matches!(
            ModeChoice::default().resolve(&d, Statistic::Tpf, false),
            PermutationMode::Exact { .. }
        ));
        let big = ParallelData::new(
            (0..30)
                .map(|i| ClusterRecord::new(format!("c{i:02}"), i < 15, 5.0 + i as f64, 20.0))
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            ModeChoice::default().resolve(&big, Statistic::Tpf, false),
            PermutationMode::MonteCarlo { .. }
        ));
        assert!(matches!(
            ModeChoice::default().resolve(&big, Statistic::Contrast, false),
            PermutationMode::MonteCarlo { .. }
        ));
        assert!(analyze_parallel(&d, &AnalyzeOptions { analysis: AnalysisOptions { alpha: 0.6, ..Default::default() }, ..options(&d, IntervalMethod::Normal) }).is_err());
    }
}
