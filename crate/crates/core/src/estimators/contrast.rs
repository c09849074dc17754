//! Difference-in-means of cluster log-contrasts, optionally regression
//! adjusted for cluster-level covariates.
//!
//! Everything here is linear in the response vector: the adjusted estimate,
//! the per-arm slopes and the residuals. The dose-response machinery relies
//! on that to express the estimate and its variance as exact linear and
//! quadratic functions of the hypothesised slope.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::report::{AnalysisOptions, CiMethod, EstimateReport, Method};
use crate::error::{Error, Result};
use crate::model::ParallelData;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    /// Plain difference in means.
    None,
    /// Slopes from per-arm least squares, combined by arm share.
    Estimated,
    /// A fixed coefficient vector.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Arm {
    rows: Vec<usize>,
    x_mean: DVector<f64>,
    x_centered: DMatrix<f64>,
    // (X'X)^-1 X' for the centered design, Estimated only
    solver: Option<DMatrix<f64>>,
}

/// The part of a contrast fit that depends only on assignment and covariates.
#[derive(Debug, Clone)]
pub struct ContrastDesign {
    m: usize,
    p: usize,
    adjustment: Adjustment,
    treated: Arm,
    control: Arm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastFit {
    pub estimate: f64,
    pub variance: f64,
    /// Coefficient vector actually used for the adjustment.
    pub beta: Vec<f64>,
    pub beta_treated: Option<Vec<f64>>,
    pub beta_control: Option<Vec<f64>>,
    /// Within-arm residuals, by cluster position.
    pub residuals: Vec<f64>,
    pub resid_var_treated: f64,
    pub resid_var_control: f64,
}

/// Fitted covariate adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateFit {
    pub beta_hat: Vec<f64>,
    pub beta_treated: Option<Vec<f64>>,
    pub beta_control: Option<Vec<f64>>,
    pub resid_var_treated: f64,
    pub resid_var_control: f64,
}

impl ContrastDesign {
    pub fn new(treated: &[bool], x: &[Vec<f64>], adjustment: Adjustment) -> Result<Self> {
        let m = treated.len();
        if x.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: x.len(),
            });
        }
        let p = x.first().map_or(0, Vec::len);
        let required = match &adjustment {
            Adjustment::Estimated => {
                if p == 0 {
                    return Err(Error::InvalidInput(
                        "covariate adjustment requested but the data have no covariates".into(),
                    ));
                }
                p + 2
            }
            Adjustment::Fixed(beta) => {
                if beta.len() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        found: beta.len(),
                    });
                }
                2
            }
            Adjustment::None => 2,
        };
        let estimate_slopes = matches!(adjustment, Adjustment::Estimated);
        let build = |flag: bool, label: &'static str| -> Result<Arm> {
            let rows: Vec<usize> = (0..m).filter(|&i| treated[i] == flag).collect();
            if rows.len() < required {
                return Err(Error::ArmTooSmall {
                    arm: label.to_string(),
                    size: rows.len(),
                    required,
                });
            }
            let n = rows.len();
            let mut x_mean = DVector::zeros(p);
            for &i in &rows {
                for k in 0..p {
                    x_mean[k] += x[i][k];
                }
            }
            x_mean /= n as f64;
            let x_centered = DMatrix::from_fn(n, p, |r, k| x[rows[r]][k] - x_mean[k]);
            let solver = if estimate_slopes {
                let svd = x_centered.clone().svd(true, true);
                let smax = svd.singular_values.max();
                let tol = smax * 1e-10 * (n.max(p) as f64);
                if smax == 0.0 || svd.singular_values.iter().any(|&s| s <= tol) {
                    return Err(Error::RankDeficientCovariates { arm: label });
                }
                Some(svd.pseudo_inverse(tol).map_err(|e| Error::InvalidInput(e.to_string()))?)
            } else {
                None
            };
            Ok(Arm {
                rows,
                x_mean,
                x_centered,
                solver,
            })
        };
        let treated_arm = build(true, "treated")?;
        let control_arm = build(false, "control")?;
        Ok(Self {
            m,
            p,
            adjustment,
            treated: treated_arm,
            control: control_arm,
        })
    }

    pub fn from_data(data: &ParallelData, adjustment: Adjustment) -> Result<Self> {
        Self::new(&data.treated(), &data.covariates(), adjustment)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m1(&self) -> usize {
        self.treated.rows.len()
    }

    fn df(&self, arm: &Arm) -> f64 {
        let n = arm.rows.len();
        match self.adjustment {
            Adjustment::Estimated => (n - self.p - 1) as f64,
            _ => (n - 1) as f64,
        }
    }

    pub fn fit(&self, y: &[f64]) -> Result<ContrastFit> {
        if y.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: y.len(),
            });
        }
        let fixed_beta = match &self.adjustment {
            Adjustment::Fixed(b) => Some(DVector::from_column_slice(b)),
            Adjustment::None => Some(DVector::zeros(self.p)),
            Adjustment::Estimated => None,
        };
        let mut residuals = vec![0.0; self.m];
        // (mean of y, slopes) per arm
        let mut arm_stats = |arm: &Arm| -> (f64, Option<DVector<f64>>, f64) {
            let n = arm.rows.len();
            let y_mean = arm.rows.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
            let yc = DVector::from_iterator(n, arm.rows.iter().map(|&i| y[i] - y_mean));
            let (fitted, slopes) = match (&arm.solver, &fixed_beta) {
                (Some(solver), _) => {
                    let b = solver * &yc;
                    (&arm.x_centered * &b, Some(b))
                }
                (None, Some(b)) => (&arm.x_centered * b, None),
                (None, None) => unreachable!("estimated adjustment always has a solver"),
            };
            let mut rss = 0.0;
            for (r, &i) in arm.rows.iter().enumerate() {
                let e = yc[r] - fitted[r];
                residuals[i] = e;
                rss += e * e;
            }
            (y_mean, slopes, rss)
        };
        let (y1, b1, rss1) = arm_stats(&self.treated);
        let (y0, b0, rss0) = arm_stats(&self.control);
        let n1 = self.treated.rows.len() as f64;
        let n0 = self.control.rows.len() as f64;
        let beta = match (&fixed_beta, &b1, &b0) {
            (Some(b), _, _) => b.clone(),
            (None, Some(b1), Some(b0)) => b1 * (n1 / self.m as f64) + b0 * (n0 / self.m as f64),
            _ => unreachable!(),
        };
        let dx = &self.treated.x_mean - &self.control.x_mean;
        let estimate = (y1 - y0) - beta.dot(&dx);
        let s1 = rss1 / self.df(&self.treated);
        let s0 = rss0 / self.df(&self.control);
        Ok(ContrastFit {
            estimate,
            variance: s1 / n1 + s0 / n0,
            beta: beta.iter().copied().collect(),
            beta_treated: b1.map(|b| b.iter().copied().collect()),
            beta_control: b0.map(|b| b.iter().copied().collect()),
            residuals,
            resid_var_treated: s1,
            resid_var_control: s0,
        })
    }

    /// Estimated covariance between the contrasts of two responses fitted on
    /// this design; `cross_variance(f, f) == f.variance`.
    pub fn cross_variance(&self, a: &ContrastFit, b: &ContrastFit) -> f64 {
        [&self.treated, &self.control]
            .iter()
            .map(|arm| {
                let s: f64 = arm
                    .rows
                    .iter()
                    .map(|&i| a.residuals[i] * b.residuals[i])
                    .sum();
                s / self.df(arm) / arm.rows.len() as f64
            })
            .sum()
    }
}

/// Unadjusted log-contrast estimator with the Neyman variance estimate.
pub fn log_contrast_estimate(data: &ParallelData, opts: &AnalysisOptions) -> Result<EstimateReport> {
    let l = data.log_contrasts(opts.continuity_correction)?;
    let design = ContrastDesign::from_data(data, Adjustment::None)?;
    let fit = design.fit(&l)?;
    let mut report = EstimateReport::point(Method::LogContrast, fit.estimate, opts.alpha)
        .with_normal_inference(fit.variance.sqrt(), 0.0, CiMethod::Normal);
    report.diagnose("m", data.m());
    report.diagnose("m1", data.m1());
    report.diagnose("var_treated", fit.resid_var_treated);
    report.diagnose("var_control", fit.resid_var_control);
    if opts.continuity_correction {
        report.diagnose("continuity_correction", true);
    }
    Ok(report)
}

/// Covariate-adjusted log-contrast estimator.
///
/// With `beta = None` the coefficients are `(m1/m) b_1 + (m0/m) b_0` from
/// per-arm least squares with intercept and the variance uses residual
/// variances on `n_a - p - 1` degrees of freedom. A supplied `beta` is used
/// as is; the variance then comes from the sample variances of `L - X beta`.
pub fn covariate_adjusted_estimate(
    data: &ParallelData,
    beta: Option<&[f64]>,
    opts: &AnalysisOptions,
) -> Result<(EstimateReport, CovariateFit)> {
    let l = data.log_contrasts(opts.continuity_correction)?;
    let adjustment = match beta {
        Some(b) => Adjustment::Fixed(b.to_vec()),
        None => Adjustment::Estimated,
    };
    let design = ContrastDesign::from_data(data, adjustment)?;
    let fit = design.fit(&l)?;
    let mut report = EstimateReport::point(Method::CovariateAdjusted, fit.estimate, opts.alpha)
        .with_normal_inference(fit.variance.sqrt(), 0.0, CiMethod::Normal);
    report.diagnose("beta", fit.beta.clone());
    report.diagnose("beta_source", if beta.is_some() { "fixed" } else { "estimated" });
    report.diagnose("m", data.m());
    report.diagnose("m1", data.m1());
    let cov_fit = CovariateFit {
        beta_hat: fit.beta,
        beta_treated: fit.beta_treated,
        beta_control: fit.beta_control,
        resid_var_treated: fit.resid_var_treated,
        resid_var_control: fit.resid_var_control,
    };
    Ok((report, cov_fit))
}

/// Variance-minimizing coefficients `V(X)^-1 C(X, L(0))` for known control
/// log-contrasts.
pub fn optimal_beta(x: &[Vec<f64>], l0: &[f64]) -> Result<Vec<f64>> {
    let m = x.len();
    let p = x.first().map_or(0, Vec::len);
    if l0.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: l0.len(),
        });
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|k| x.iter().map(|r| r[k]).collect()).collect();
    let v = DMatrix::from_fn(p, p, |a, b| stats::sample_covariance(&cols[a], &cols[b]));
    let c = DVector::from_fn(p, |a, _| stats::sample_covariance(&cols[a], l0));
    v.lu()
        .solve(&c)
        .map(|b| b.iter().copied().collect())
        .ok_or(Error::RankDeficientCovariates { arm: "pooled" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClusterRecord;

    fn data_from_l(treated: &[f64], control: &[f64]) -> ParallelData {
        let mut recs = Vec::new();
        for (k, l) in treated.iter().enumerate() {
            recs.push(ClusterRecord::new(format!("t{k}"), true, l.exp(), 1.0));
        }
        for (k, l) in control.iter().enumerate() {
            recs.push(ClusterRecord::new(format!("c{k}"), false, l.exp(), 1.0));
        }
        ParallelData::new(recs).unwrap()
    }

    #[test]
    fn degenerate_zero_variance() {
        let d = data_from_l(&[0.2, 0.2], &[0.2, 0.2]);
        let r = log_contrast_estimate(&d, &AnalysisOptions::default()).unwrap();
        assert!(r.log_estimate.abs() < 1e-15);
        assert!(r.se_log.unwrap().abs() < 1e-7);
    }

    #[test]
    fn arithmetic_example() {
        let d = data_from_l(&[0.1, 0.3], &[0.0, 0.2]);
        let r = log_contrast_estimate(&d, &AnalysisOptions::default()).unwrap();
        assert!((r.log_estimate - 0.1).abs() < 1e-12);
        assert!((r.se_log.unwrap().powi(2) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn arm_too_small() {
        let d = data_from_l(&[0.1], &[0.0, 0.2]);
        assert!(matches!(
            log_contrast_estimate(&d, &AnalysisOptions::default()),
            Err(Error::ArmTooSmall { .. })
        ));
    }

    fn covariate_data(shift: f64) -> ParallelData {
        let xs = [0.3, 1.1, 2.0, 0.7, 1.6, 2.4, 0.9, 1.3];
        let recs = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let l = 0.5 + 0.8 * x + 0.1 * ((i * 7 % 5) as f64 - 2.0);
                ClusterRecord::new(format!("k{i}"), i % 2 == 0, l.exp(), 1.0)
                    .with_covariates(vec![x + shift])
            })
            .collect();
        ParallelData::new(recs).unwrap()
    }

    #[test]
    fn zero_beta_matches_unadjusted() {
        let d = covariate_data(0.0);
        let opts = AnalysisOptions::default();
        let plain = log_contrast_estimate(&d, &opts).unwrap();
        let (adj, _) = covariate_adjusted_estimate(&d, Some(&[0.0]), &opts).unwrap();
        assert!((plain.log_estimate - adj.log_estimate).abs() < 1e-14);
        assert!((plain.se_log.unwrap() - adj.se_log.unwrap()).abs() < 1e-14);
    }

    #[test]
    fn constant_covariate_has_no_effect_for_any_beta() {
        let recs: Vec<_> = covariate_data(0.0)
            .records()
            .iter()
            .cloned()
            .map(|r| r.with_covariates(vec![4.2]))
            .collect();
        let d = ParallelData::new(recs).unwrap();
        let opts = AnalysisOptions::default();
        let plain = log_contrast_estimate(&d, &opts).unwrap();
        for beta in [-3.0, 0.5, 11.0] {
            let (adj, _) = covariate_adjusted_estimate(&d, Some(&[beta]), &opts).unwrap();
            assert!((plain.log_estimate - adj.log_estimate).abs() < 1e-12);
        }
        assert!(matches!(
            covariate_adjusted_estimate(&d, None, &opts),
            Err(Error::RankDeficientCovariates { .. })
        ));
    }

    #[test]
    fn estimated_beta_is_arm_weighted_and_translation_invariant() {
        let opts = AnalysisOptions::default();
        let (r0, f0) = covariate_adjusted_estimate(&covariate_data(0.0), None, &opts).unwrap();
        let (r1, f1) = covariate_adjusted_estimate(&covariate_data(37.5), None, &opts).unwrap();
        assert!((r0.log_estimate - r1.log_estimate).abs() < 1e-12);
        assert!((f0.beta_hat[0] - f1.beta_hat[0]).abs() < 1e-12);
        let b1 = f0.beta_treated.as_ref().unwrap()[0];
        let b0 = f0.beta_control.as_ref().unwrap()[0];
        assert!((f0.beta_hat[0] - (0.5 * b1 + 0.5 * b0)).abs() < 1e-15);
        assert!(f0.resid_var_treated >= 0.0 && f0.resid_var_control >= 0.0);
    }

    #[test]
    fn cross_variance_is_consistent() {
        let d = covariate_data(0.0);
        let design = ContrastDesign::from_data(&d, Adjustment::Estimated).unwrap();
        let l = d.log_contrasts(false).unwrap();
        let f = design.fit(&l).unwrap();
        assert!((design.cross_variance(&f, &f) - f.variance).abs() < 1e-15);
        // linearity in the response
        let shifted: Vec<f64> = l.iter().zip(d.covariates()).map(|(a, x)| a - 2.0 * x[0]).collect();
        let fx = design
            .fit(&d.covariates().iter().map(|x| x[0]).collect::<Vec<_>>())
            .unwrap();
        let fs = design.fit(&shifted).unwrap();
        assert!((fs.estimate - (f.estimate - 2.0 * fx.estimate)).abs() < 1e-12);
    }
}
