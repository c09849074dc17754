//! Stepped-wedge log-contrast estimator.
//!
//! At each analysis period `t` the per-period contrast `D_t` is the
//! difference in mean log-contrast between clusters already under
//! intervention (`start <= t`) and the rest. The estimator is `sum w_t D_t`
//! with `sum w_t = 1`, and its variance is `w' Sigma w` where, for
//! `t1 <= t2`, `Sigma[t1][t2] = m / (m_t2 (m - m_t1)) S_{t1,t2}` and `S` is
//! the finite-population covariance (divisor `m - 1`) of the control
//! log-contrasts across clusters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::assignment::{Assignment, AssignmentScheme};
use crate::error::{Error, Result};
use crate::estimators::{AnalysisOptions, CiMethod, EstimateReport, Method};
use crate::inference::{permutation_distribution_test, PermutationMode, PermutationResult};
use crate::model::Panel;
use crate::stats;

pub const DEFAULT_CONDITION_LIMIT: f64 = 1e10;

/// Scaling of the off-diagonal covariance entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaConvention {
    /// `m / (m_t2 (m - m_t1))`, which matches the randomization covariance.
    #[default]
    Canonical,
    /// `m / (m_{t2-1} (m - m_t1))`.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceProvenance {
    /// From known control log-contrasts.
    Oracle,
    /// Three-group plug-in estimate from one observed panel.
    Estimated,
    /// Empirical covariance over assignments.
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwCovariance {
    /// Analysis periods, in order; rows and columns of `sigma` follow them.
    pub periods: Vec<usize>,
    /// `m_t` at each analysis period.
    pub group_sizes: Vec<usize>,
    /// `S_{t1,t2}` (or estimates); `NaN` where not used.
    pub s_values: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub provenance: CovarianceProvenance,
    pub convention: SigmaConvention,
}

impl SwCovariance {
    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |r, c| self.sigma[r][c])
    }

    /// `w' Sigma w`.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        let mut s = 0.0;
        for (r, wr) in w.iter().enumerate() {
            for (c, wc) in w.iter().enumerate() {
                s += wr * self.sigma[r][c] * wc;
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Equal,
    OptimalOracle,
    OptimalPlugin,
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwWeights {
    pub w: Vec<f64>,
    pub kind: WeightKind,
}

impl SwWeights {
    pub fn equal(k: usize) -> Self {
        SwWeights {
            w: vec![1.0 / k as f64; k],
            kind: WeightKind::Equal,
        }
    }

    pub fn supplied(w: Vec<f64>) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if w.is_empty() || w.iter().any(|x| !x.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "stepped-wedge weights must be finite and sum to 1, got sum {total}"
            )));
        }
        Ok(SwWeights {
            w,
            kind: WeightKind::Supplied,
        })
    }
}

/// `Sigma^-1 1 / (1' Sigma^-1 1)`, refusing matrices that are not positive
/// definite or whose condition number exceeds `condition_limit`.
pub fn optimal_weight_vector(sigma: &DMatrix<f64>, condition_limit: f64) -> Result<Vec<f64>> {
    let k = sigma.nrows();
    let eig = SymmetricEigen::new(sigma.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= condition_limit) {
        return Err(Error::SingularCovariance { condition });
    }
    let inv_diag = DVector::from_iterator(k, eig.eigenvalues.iter().map(|&l| 1.0 / l));
    let q = &eig.eigenvectors;
    let ones = DVector::from_element(k, 1.0);
    let x = q * inv_diag.component_mul(&(q.transpose() * &ones));
    let total = x.sum();
    Ok(x.iter().map(|v| v / total).collect())
}

pub fn optimal_weights(
    sigma: &SwCovariance,
    kind: WeightKind,
    condition_limit: f64,
) -> Result<SwWeights> {
    Ok(SwWeights {
        w: optimal_weight_vector(&sigma.matrix(), condition_limit)?,
        kind,
    })
}

fn scale(m: usize, sizes: &[usize], t1: usize, t2: usize, convention: SigmaConvention) -> f64 {
    let (a, b) = (t1.min(t2), t1.max(t2));
    let m_hi = match convention {
        SigmaConvention::Printed if a != b => sizes[b - 2],
        _ => sizes[b - 1],
    };
    m as f64 / (m_hi as f64 * (m - sizes[a - 1]) as f64)
}

fn checked_scheme(panel: &Panel) -> Result<AssignmentScheme> {
    AssignmentScheme::stepped_wedge(panel.start_counts())
}

/// Per-period contrasts `D_t` of `l[i][t-1]` at the analysis periods under
/// start periods `start`.
fn period_contrasts_of(l: &[Vec<f64>], start: &[usize], periods: &[usize]) -> Vec<f64> {
    periods
        .iter()
        .map(|&t| {
            let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
            for (row, &a) in l.iter().zip(start) {
                if t >= a {
                    s1 += row[t - 1];
                    n1 += 1;
                } else {
                    s0 += row[t - 1];
                    n0 += 1;
                }
            }
            s1 / n1 as f64 - s0 / n0 as f64
        })
        .collect()
}

/// Analysis periods and the per-period contrasts of an observed panel.
pub fn period_contrasts(panel: &Panel, correction: bool) -> Result<(Vec<usize>, Vec<f64>)> {
    let scheme = checked_scheme(panel)?;
    let periods = scheme.analysis_periods();
    let l = panel.log_contrasts(correction)?;
    Ok((periods.clone(), period_contrasts_of(&l, panel.start_periods(), &periods)))
}

fn column(l: &[Vec<f64>], rows: &[usize], t: usize) -> Vec<f64> {
    rows.iter().map(|&i| l[i][t - 1]).collect()
}

/// Plug-in covariance. Diagonal entries are the Neyman variances
/// `s1^2 / m_t + s0^2 / (m - m_t)`. For `t1 < t2`, `S_{t1,t2}` is the sample
/// covariance within the largest of the groups started by `t1`, started in
/// `(t1, t2]`, and not started by `t2` (ties go to the earlier group).
pub fn sw_covariance_estimate(
    panel: &Panel,
    correction: bool,
    convention: SigmaConvention,
) -> Result<SwCovariance> {
    let scheme = checked_scheme(panel)?;
    let periods = scheme.analysis_periods();
    let sizes = scheme.group_sizes();
    let m = panel.m();
    let l = panel.log_contrasts(correction)?;
    let start = panel.start_periods();
    let k = periods.len();
    let mut s_values = vec![vec![f64::NAN; k]; k];
    let mut sigma = vec![vec![0.0; k]; k];
    for (r, &t) in periods.iter().enumerate() {
        let treated: Vec<usize> = (0..m).filter(|&i| start[i] <= t).collect();
        let control: Vec<usize> = (0..m).filter(|&i| start[i] > t).collect();
        for (rows, arm) in [(&treated, "treated"), (&control, "control")] {
            if rows.len() < 2 {
                return Err(Error::ArmTooSmall {
                    arm: format!("{arm} at period {t}"),
                    size: rows.len(),
                    required: 2,
                });
            }
        }
        let v1 = stats::sample_variance(&column(&l, &treated, t));
        let v0 = stats::sample_variance(&column(&l, &control, t));
        sigma[r][r] = v1 / treated.len() as f64 + v0 / control.len() as f64;
        let (mt, mc) = (treated.len() as f64, control.len() as f64);
        s_values[r][r] = sigma[r][r] * mt * mc / m as f64;
    }
    for r in 0..k {
        for c in r + 1..k {
            let (t1, t2) = (periods[r], periods[c]);
            let groups: [(Vec<usize>, &'static str); 3] = [
                ((0..m).filter(|&i| start[i] <= t1).collect(), "started by t1"),
                (
                    (0..m).filter(|&i| start[i] > t1 && start[i] <= t2).collect(),
                    "started in (t1, t2]",
                ),
                ((0..m).filter(|&i| start[i] > t2).collect(), "not started by t2"),
            ];
            let mut chosen = 0;
            for g in 1..3 {
                if groups[g].0.len() > groups[chosen].0.len() {
                    chosen = g;
                }
            }
            let (rows, label) = &groups[chosen];
            if rows.len() < 2 {
                return Err(Error::GroupTooSmall {
                    t1,
                    t2,
                    group: label,
                    size: rows.len(),
                });
            }
            let s = stats::sample_covariance(&column(&l, rows, t1), &column(&l, rows, t2));
            s_values[r][c] = s;
            s_values[c][r] = s;
            let v = scale(m, &sizes, t1, t2, convention) * s;
            sigma[r][c] = v;
            sigma[c][r] = v;
        }
    }
    Ok(SwCovariance {
        group_sizes: periods.iter().map(|&t| sizes[t - 1]).collect(),
        periods,
        s_values,
        sigma,
        provenance: CovarianceProvenance::Estimated,
        convention,
    })
}

/// Covariance of the per-period contrasts over the randomization
/// distribution, from known control log-contrasts `l0[i][t-1]`.
pub fn sw_oracle_covariance(
    l0: &[Vec<f64>],
    scheme: &AssignmentScheme,
    convention: SigmaConvention,
) -> Result<SwCovariance> {
    let AssignmentScheme::SteppedWedge { .. } = scheme else {
        return Err(Error::InvalidScheme("expected a stepped-wedge scheme".into()));
    };
    scheme.validate()?;
    let m = scheme.m();
    if l0.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: l0.len(),
        });
    }
    let periods = scheme.analysis_periods();
    let sizes = scheme.group_sizes();
    let k = periods.len();
    let all: Vec<usize> = (0..m).collect();
    let mut s_values = vec![vec![0.0; k]; k];
    let mut sigma = vec![vec![0.0; k]; k];
    for r in 0..k {
        for c in r..k {
            let (t1, t2) = (periods[r], periods[c]);
            let s = stats::sample_covariance(&column(l0, &all, t1), &column(l0, &all, t2));
            let v = scale(m, &sizes, t1, t2, convention) * s;
            s_values[r][c] = s;
            s_values[c][r] = s;
            sigma[r][c] = v;
            sigma[c][r] = v;
        }
    }
    Ok(SwCovariance {
        group_sizes: periods.iter().map(|&t| sizes[t - 1]).collect(),
        periods,
        s_values,
        sigma,
        provenance: CovarianceProvenance::Oracle,
        convention,
    })
}

/// Empirical covariance of the per-period contrasts over an explicit list
/// of assignments (population divisor).
pub fn sw_permutation_covariance(
    l: &[Vec<f64>],
    scheme: &AssignmentScheme,
    assignments: impl Iterator<Item = Assignment>,
) -> Result<SwCovariance> {
    let periods = scheme.analysis_periods();
    let sizes = scheme.group_sizes();
    let k = periods.len();
    let mut n = 0usize;
    let mut sum = vec![0.0; k];
    let mut cross = vec![vec![0.0; k]; k];
    for a in assignments {
        let d = period_contrasts_of(l, a.values(), &periods);
        for r in 0..k {
            sum[r] += d[r];
            for c in 0..k {
                cross[r][c] += d[r] * d[c];
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput("no assignments supplied".into()));
    }
    let nf = n as f64;
    let sigma: Vec<Vec<f64>> = (0..k)
        .map(|r| {
            (0..k)
                .map(|c| cross[r][c] / nf - sum[r] / nf * sum[c] / nf)
                .collect()
        })
        .collect();
    Ok(SwCovariance {
        group_sizes: periods.iter().map(|&t| sizes[t - 1]).collect(),
        periods,
        s_values: vec![vec![f64::NAN; k]; k],
        sigma,
        provenance: CovarianceProvenance::Permutation,
        convention: SigmaConvention::Canonical,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    #[default]
    Equal,
    /// Plug-in optimal weights from the estimated covariance; falls back to
    /// equal weights when the estimate is singular.
    Optimal,
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwOptions {
    pub weights: WeightChoice,
    pub convention: SigmaConvention,
    pub condition_limit: f64,
}

impl Default for SwOptions {
    fn default() -> Self {
        SwOptions {
            weights: WeightChoice::Equal,
            convention: SigmaConvention::Canonical,
            condition_limit: DEFAULT_CONDITION_LIMIT,
        }
    }
}

/// Stepped-wedge estimate with SE `sqrt(w' Sigma_hat w)`.
pub fn sw_log_contrast(
    panel: &Panel,
    sw: &SwOptions,
    opts: &AnalysisOptions,
) -> Result<EstimateReport> {
    let scheme = checked_scheme(panel)?;
    let (periods, d) = period_contrasts(panel, opts.continuity_correction)?;
    let sigma_hat = sw_covariance_estimate(panel, opts.continuity_correction, sw.convention)?;
    let mut warnings = Vec::new();
    let weights = match &sw.weights {
        WeightChoice::Equal => SwWeights::equal(periods.len()),
        WeightChoice::Supplied(w) => {
            if w.len() != periods.len() {
                return Err(Error::DimensionMismatch {
                    expected: periods.len(),
                    found: w.len(),
                });
            }
            SwWeights::supplied(w.clone())?
        }
        WeightChoice::Optimal => {
            match optimal_weights(&sigma_hat, WeightKind::OptimalPlugin, sw.condition_limit) {
                Ok(w) => w,
                Err(e @ Error::SingularCovariance { .. }) => {
                    warnings.push(format!("{e}; using equal weights"));
                    SwWeights::equal(periods.len())
                }
                Err(e) => return Err(e),
            }
        }
    };
    let mut report = sw_report(&d, &weights, &sigma_hat, opts.alpha);
    let dropped: Vec<usize> = (1..panel.periods())
        .filter(|t| !periods.contains(t))
        .collect();
    if !dropped.is_empty() {
        report.warn(format!(
            "periods {dropped:?} have no treated or no control clusters and are dropped"
        ));
    }
    for w in warnings {
        report.warn(w);
    }
    report.diagnose("q", scheme.group_sizes());
    report.diagnose("m", panel.m());
    Ok(report)
}

/// Report for given per-period contrasts, weights and covariance.
pub fn sw_report(
    d: &[f64],
    weights: &SwWeights,
    sigma: &SwCovariance,
    alpha: f64,
) -> EstimateReport {
    let estimate: f64 = weights.w.iter().zip(d).map(|(w, d)| w * d).sum();
    let var = sigma.quadratic_form(&weights.w);
    let mut report = EstimateReport::point(Method::SwLogContrast, estimate, alpha);
    if var >= 0.0 {
        report = report.with_normal_inference(var.sqrt(), 0.0, CiMethod::Normal);
    } else {
        report.warn("estimated variance is negative; no interval reported");
    }
    report.diagnose("periods", sigma.periods.clone());
    report.diagnose("period_contrasts", d.to_vec());
    report.diagnose("weights", weights.w.clone());
    report.diagnose(
        "weight_kind",
        serde_json::to_value(weights.kind).unwrap_or_default(),
    );
    report.diagnose(
        "sigma_convention",
        serde_json::to_value(sigma.convention).unwrap_or_default(),
    );
    report
}

/// Permutation test of `lambda = lambda0` with statistic `sum w_t D_t` of
/// the null-imputed log-contrasts.
pub fn sw_permutation_test(
    panel: &Panel,
    lambda0: f64,
    w: &[f64],
    mode: PermutationMode,
    correction: bool,
) -> Result<PermutationResult> {
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda0 must be positive, got {lambda0}")));
    }
    let scheme = checked_scheme(panel)?;
    let periods = scheme.analysis_periods();
    if w.len() != periods.len() {
        return Err(Error::DimensionMismatch {
            expected: periods.len(),
            found: w.len(),
        });
    }
    let shift = lambda0.ln();
    let mut l0 = panel.log_contrasts(correction)?;
    for (i, row) in l0.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            if panel.treated_at(i, k + 1) {
                *v -= shift;
            }
        }
    }
    let stat = |a: &Assignment| -> Result<f64> {
        Ok(period_contrasts_of(&l0, a.values(), &periods)
            .iter()
            .zip(w)
            .map(|(d, w)| d * w)
            .sum())
    };
    let observed = stat(&panel.assignment())?;
    let scale = l0
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    permutation_distribution_test(&scheme, observed, scale, mode, stat)
}
