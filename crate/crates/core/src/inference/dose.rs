//! Instrumental-variable dose-response analysis.
//!
//! Under `L_i = L_i(0) + beta D_i` the null-imputed outcomes `L - beta0 D`
//! are assignment invariant at the true slope, and the randomized arm `A`
//! serves as the instrument. The test statistic is the (optionally
//! covariate adjusted) difference in means of `L - beta0 D`, which equals
//! `a - beta0 b` with `a`, `b` the contrasts of `L` and `D`. Its estimated
//! variance is the quadratic `v_LL - 2 beta0 v_LD + beta0^2 v_DD`, so the
//! Normal test has a closed-form maximizer `a / b` and inverts to a
//! Fieller-type interval.

use serde::{Deserialize, Serialize};

use super::invert::{invert_ci, SearchMethod};
use super::null::{NullAdjustment, NullSpec};
use super::permutation::{permutation_test, PermutationMode, Statistic};
use crate::error::{Error, Result};
use crate::estimators::{Adjustment, AnalysisOptions, CiMethod, ContrastDesign, EstimateReport, Interval, Method};
use crate::model::ParallelData;
use crate::numerics;
use crate::stats;

const PRESCAN_POINTS: usize = 201;
const GOLDEN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "inference", rename_all = "snake_case")]
pub enum DoseInference {
    #[default]
    Normal,
    Permutation { mode: PermutationMode },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DoseOptions {
    pub inference: DoseInference,
    pub adjustment: NullAdjustment,
    pub search: SearchMethod,
}

/// Reduced-form and first-stage contrasts with their estimated
/// (co)variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseLinearization {
    /// Contrast of `L`.
    pub a: f64,
    /// Contrast of `D`.
    pub b: f64,
    pub v_ll: f64,
    pub v_ld: f64,
    pub v_dd: f64,
    /// Estimates and standard errors below this are treated as zero.
    pub tol: f64,
}

fn check_doses(d: &[f64]) -> Result<(f64, f64)> {
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Err(Error::ConstantDose);
    }
    Ok((lo, hi))
}

impl DoseLinearization {
    pub fn new(data: &ParallelData, adjustment: NullAdjustment, correction: bool) -> Result<Self> {
        let l = data.log_contrasts(correction)?;
        let d = data.doses()?;
        check_doses(&d)?;
        let adj = match adjustment {
            NullAdjustment::None => Adjustment::None,
            NullAdjustment::Covariates => Adjustment::Estimated,
        };
        let design = ContrastDesign::from_data(data, adj)?;
        let fl = design.fit(&l)?;
        let fd = design.fit(&d)?;
        let scale = l.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        Ok(Self {
            a: fl.estimate,
            b: fd.estimate,
            v_ll: fl.variance,
            v_ld: design.cross_variance(&fl, &fd),
            v_dd: fd.variance,
            tol: 1e-10 * scale,
        })
    }

    pub fn statistic(&self, beta0: f64) -> f64 {
        self.a - beta0 * self.b
    }

    pub fn variance(&self, beta0: f64) -> f64 {
        (self.v_ll - 2.0 * beta0 * self.v_ld + beta0 * beta0 * self.v_dd).max(0.0)
    }

    /// Two-sided Normal p-value of `H0: beta = beta0`.
    pub fn p_value(&self, beta0: f64) -> f64 {
        let t = self.statistic(beta0);
        let se = self.variance(beta0).sqrt();
        if se <= self.tol {
            return if t.abs() <= self.tol { 1.0 } else { 0.0 };
        }
        stats::two_sided_normal_p(t / se)
    }

    /// Maximizer of the Normal p-value.
    pub fn point_estimate(&self) -> Result<f64> {
        if self.b.abs() <= 1e-12 {
            return Err(Error::StatisticUndefined(
                "assignment does not shift the mean dose".into(),
            ));
        }
        Ok(self.a / self.b)
    }

    /// Delta-method standard error of `a / b`.
    pub fn standard_error(&self) -> Result<f64> {
        Ok(self.variance(self.point_estimate()?).sqrt() / self.b.abs())
    }

    /// `{beta0 : (a - beta0 b)^2 <= z^2 var(beta0)}`.
    pub fn interval(&self, alpha: f64) -> Result<(f64, f64)> {
        let est = self.point_estimate()?;
        let z2 = stats::normal_critical(alpha).powi(2);
        let qa = self.b * self.b - z2 * self.v_dd;
        if qa <= 0.0 {
            return Err(Error::UnboundedConfidenceSet);
        }
        let qb = -2.0 * (self.a * self.b - z2 * self.v_ld);
        let qc = self.a * self.a - z2 * self.v_ll;
        Ok(match numerics::quadratic_roots(qa, qb, qc).as_slice() {
            [lo, hi] => (lo.min(est), hi.max(est)),
            _ => (est, est),
        })
    }
}

/// Normal test of `H0: beta = beta0`; the interval is the inverted test.
pub fn dose_response_test(
    data: &ParallelData,
    beta0: f64,
    adjustment: NullAdjustment,
    opts: &AnalysisOptions,
) -> Result<EstimateReport> {
    NullSpec::dose_response(beta0)?;
    let lin = DoseLinearization::new(data, adjustment, opts.continuity_correction)?;
    let est = lin.point_estimate()?;
    let mut report = EstimateReport::point(Method::DoseResponse, est, opts.alpha);
    report.se_log = Some(lin.standard_error()?);
    report.p_value = Some(lin.p_value(beta0));
    report.null_value = Some(beta0);
    report.ci_method = Some(CiMethod::TestInversion);
    match lin.interval(opts.alpha) {
        Ok((lo, hi)) => report.ci = Some(Interval { low: lo, high: hi }),
        Err(e @ Error::UnboundedConfidenceSet) => report.warn(e.to_string()),
        Err(e) => return Err(e),
    }
    annotate(&mut report, data, &lin, adjustment)?;
    Ok(report)
}

fn annotate(
    report: &mut EstimateReport,
    data: &ParallelData,
    lin: &DoseLinearization,
    adjustment: NullAdjustment,
) -> Result<()> {
    let (lo, hi) = check_doses(&data.doses()?)?;
    report.diagnose("dose_min", lo);
    report.diagnose("dose_max", hi);
    report.diagnose("reduced_form", lin.a);
    report.diagnose("first_stage", lin.b);
    report.diagnose(
        "adjustment",
        match adjustment {
            NullAdjustment::None => "none",
            NullAdjustment::Covariates => "covariates",
        },
    );
    if lin.variance(lin.a / lin.b).sqrt() <= lin.tol {
        report.diagnose("degenerate_variance", true);
    }
    Ok(())
}

/// Slope estimate as the maximizer of the test p-value, with the interval
/// from inverting the same test. The reported p-value is for `beta = 0`.
pub fn dose_response_estimate(
    data: &ParallelData,
    opts: &AnalysisOptions,
    dose: &DoseOptions,
) -> Result<EstimateReport> {
    let mut report = dose_response_test(data, 0.0, dose.adjustment, opts)?;
    let mode = match dose.inference {
        DoseInference::Normal => return Ok(report),
        DoseInference::Permutation { mode } => mode,
    };
    let correction = opts.continuity_correction;
    let lin = DoseLinearization::new(data, dose.adjustment, correction)?;
    let p = |beta0: f64| -> Result<f64> {
        let mut null = NullSpec::dose_response(beta0)?;
        if dose.adjustment == NullAdjustment::Covariates {
            null = null.with_covariates();
        }
        Ok(permutation_test(data, &null, Statistic::Contrast, mode, correction)?.p_two_sided)
    };
    let center = lin.point_estimate()?;
    let se = lin.standard_error()?;
    let estimate = if se > lin.tol {
        maximize_p(&p, center, se)?
    } else {
        center
    };
    report.log_estimate = estimate;
    report.p_value = Some(p(0.0)?);
    report.ci = None;
    match invert_ci(p, estimate, se, opts.alpha, dose.search, None) {
        Ok(inv) => {
            report.ci = Some(Interval {
                low: inv.low,
                high: inv.high,
            });
            for w in inv.warnings {
                report.warn(w);
            }
        }
        Err(e @ (Error::UnboundedConfidenceSet | Error::NoNonRejectedPoint { .. })) => {
            report.warn(e.to_string())
        }
        Err(e) => return Err(e),
    }
    report.diagnose("normal_estimate", center);
    report.diagnose(
        "inference",
        serde_json::to_value(dose.inference).unwrap_or_default(),
    );
    Ok(report)
}

/// Grid pre-scan over `center -/+ 10 se`, then golden-section search in the
/// bracket around the best grid point.
fn maximize_p<F: Fn(f64) -> Result<f64>>(p: &F, center: f64, se: f64) -> Result<f64> {
    let (lo, hi) = (center - 10.0 * se, center + 10.0 * se);
    let step = (hi - lo) / (PRESCAN_POINTS - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..PRESCAN_POINTS {
        let v = p(lo + step * k as f64)?;
        if v > best.1 {
            best = (k, v);
        }
    }
    let a = lo + step * best.0.saturating_sub(1) as f64;
    let b = lo + step * (best.0 + 1).min(PRESCAN_POINTS - 1) as f64;
    let mut failure = None;
    let x = numerics::golden_section_max(
        |t| match p(t) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        a,
        b,
        GOLDEN_TOL,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::log_contrast_estimate;
    use crate::model::ClusterRecord;

    fn perfect_compliance() -> ParallelData {
        let rows = [
            (true, 12.0, 30.0),
            (true, 9.0, 41.0),
            (true, 15.0, 22.0),
            (false, 30.0, 28.0),
            (false, 21.0, 35.0),
            (false, 26.0, 19.0),
        ];
        ParallelData::new(
            rows.iter()
                .enumerate()
                .map(|(i, &(t, y, z))| {
                    ClusterRecord::new(format!("c{i}"), t, y, z).with_dose(if t { 1.0 } else { 0.0 })
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_compliance_reduces_to_log_contrast() {
        let data = perfect_compliance();
        let opts = AnalysisOptions::default();
        let dose = dose_response_estimate(&data, &opts, &DoseOptions::default()).unwrap();
        let lc = log_contrast_estimate(&data, &opts).unwrap();
        assert!((dose.log_estimate - lc.log_estimate).abs() < 1e-12);
        assert!((dose.se_log.unwrap() - lc.se_log.unwrap()).abs() < 1e-12);
        assert!((dose.p_value.unwrap() - lc.p_value.unwrap()).abs() < 1e-12);
        let ci = dose.ci.unwrap();
        let lci = lc.ci.unwrap();
        assert!((ci.low - lci.low.ln()).abs() < 1e-9);
        assert!((ci.high - lci.high.ln()).abs() < 1e-9);
    }

    #[test]
    fn exact_linear_model() {
        let doses = [0.7, 0.65, 0.72, 0.3, 0.25, 0.41];
        let data = ParallelData::new(
            doses
                .iter()
                .enumerate()
                .map(|(i, &d)| {
                    let l: f64 = 2.0 - 3.0 * d;
                    ClusterRecord::new(format!("c{i}"), i < 3, l.exp(), 1.0).with_dose(d)
                })
                .collect(),
        )
        .unwrap();
        let lin = DoseLinearization::new(&data, NullAdjustment::None, false).unwrap();
        let est = lin.point_estimate().unwrap();
        assert!((est + 3.0).abs() < 1e-10);
        assert_eq!(lin.p_value(est), 1.0);
        assert!(lin.p_value(-2.0) < 1e-6);
    }

    #[test]
    fn constant_dose() {
        let data = ParallelData::new(vec![
            ClusterRecord::new("a", true, 3.0, 4.0).with_dose(0.5),
            ClusterRecord::new("b", true, 3.0, 5.0).with_dose(0.5),
            ClusterRecord::new("c", false, 3.0, 4.0).with_dose(0.5),
            ClusterRecord::new("d", false, 2.0, 4.0).with_dose(0.5),
        ])
        .unwrap();
        assert_eq!(
            DoseLinearization::new(&data, NullAdjustment::None, false),
            Err(Error::ConstantDose)
        );
    }

    #[test]
    fn golden_section_agrees_with_closed_form() {
        let doses = [0.7, 0.65, 0.72, 0.3, 0.25, 0.41];
        let noise = [0.1, -0.2, 0.05, 0.15, -0.1, 0.02];
        let data = ParallelData::new(
            (0..6)
                .map(|i| {
                    let l: f64 = 1.0 - 3.42 * doses[i] + noise[i];
                    ClusterRecord::new(format!("c{i}"), i < 3, l.exp(), 1.0).with_dose(doses[i])
                })
                .collect(),
        )
        .unwrap();
        let lin = DoseLinearization::new(&data, NullAdjustment::None, false).unwrap();
        let se = lin.standard_error().unwrap();
        let x = maximize_p(&|b| Ok(lin.p_value(b)), lin.point_estimate().unwrap() + 0.3 * se, se).unwrap();
        assert!((x - lin.point_estimate().unwrap()).abs() < 1e-5);

        // the interval endpoints sit where the p-value crosses alpha
        let (lo, hi) = lin.interval(0.05).unwrap();
        assert!((lin.p_value(lo) - 0.05).abs() < 1e-9);
        assert!((lin.p_value(hi) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn permutation_mode_runs() {
        let data = perfect_compliance();
        // 20 assignments: the smallest attainable two-sided p is 0.1
        let opts = AnalysisOptions {
            alpha: 0.25,
            ..Default::default()
        };
        let dose = DoseOptions {
            inference: DoseInference::Permutation {
                mode: PermutationMode::exact(),
            },
            ..Default::default()
        };
        let r = dose_response_estimate(&data, &opts, &dose).unwrap();
        let ci = r.ci.unwrap();
        assert!(ci.low < r.log_estimate && r.log_estimate < ci.high);
    }
}
