//! Test-positive fraction estimator.
//!
//! `T` is the arm difference of mean test-positive fractions. With equal
//! arms, `E[T]` is approximated by
//! `E_T(lambda, r) = 2 r (lambda^2 - 1) / (((2 + r) lambda + r) (r lambda + 2 + r))`
//! with `r` the pooled negative-to-positive ratio, and `lambda_hat` solves
//! `E_T(lambda, r) = T`.

use serde::{Deserialize, Serialize};

use super::report::{AnalysisOptions, EstimateReport, Method};
use crate::assignment::AssignmentScheme;
use crate::error::{Error, Result};
use crate::model::{ParallelData, PotentialTable};
use crate::numerics;

/// `E_T(lambda, r)`.
pub fn tpf_expected(lambda: f64, r: f64) -> f64 {
    2.0 * r * (lambda * lambda - 1.0) / (((2.0 + r) * lambda + r) * (r * lambda + 2.0 + r))
}

/// `(T, r)` from raw counts.
pub fn tpf_statistic_from_counts(
    ids: &[&str],
    y: &[f64],
    z: &[f64],
    treated: &[bool],
) -> Result<(f64, f64)> {
    let (mut f1, mut f0, mut n1, mut n0) = (0.0, 0.0, 0usize, 0usize);
    let (mut total_y, mut total_z) = (0.0, 0.0);
    for i in 0..y.len() {
        let n = y[i] + z[i];
        if n <= 0.0 {
            return Err(Error::EmptyCluster {
                cluster_id: ids.get(i).map_or_else(|| i.to_string(), |s| s.to_string()),
            });
        }
        if treated[i] {
            f1 += y[i] / n;
            n1 += 1;
        } else {
            f0 += y[i] / n;
            n0 += 1;
        }
        total_y += y[i];
        total_z += z[i];
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::ArmTooSmall {
            arm: if n1 == 0 { "treated" } else { "control" }.into(),
            size: 0,
            required: 1,
        });
    }
    if total_y <= 0.0 {
        return Err(Error::ZeroPositiveTotal);
    }
    Ok((f1 / n1 as f64 - f0 / n0 as f64, total_z / total_y))
}

pub fn tpf_statistic(data: &ParallelData) -> Result<(f64, f64)> {
    let ids: Vec<&str> = data.records().iter().map(|r| r.cluster_id.as_str()).collect();
    let y: Vec<f64> = data.records().iter().map(|r| r.y_count).collect();
    let z: Vec<f64> = data.records().iter().map(|r| r.z_count).collect();
    tpf_statistic_from_counts(&ids, &y, &z, &data.treated())
}

fn check_monotone(r: f64) -> bool {
    // log-spaced grid over lambda in [1e-6, 1e6]
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=96 {
        let lambda = 10f64.powf(-6.0 + 12.0 * k as f64 / 96.0);
        let v = tpf_expected(lambda, r);
        if v <= prev {
            return false;
        }
        prev = v;
    }
    true
}

/// Solves `E_T(lambda, r) = t` for `lambda > 0`.
///
/// Cross-multiplying gives
/// `[t r (2+r) - 2r] lambda^2 + t [(2+r)^2 + r^2] lambda + [t r (2+r) + 2r] = 0`.
/// `E_T` increases from `-2/(2+r)` to `2/(2+r)`, so inside that range the
/// product of the roots is negative and exactly one root is positive.
pub fn tpf_solve(t: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) || !t.is_finite() {
        return Err(Error::NoAdmissibleRoot { t, r });
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let bound = 2.0 / (2.0 + r);
    if t.abs() >= bound {
        return Err(Error::NoAdmissibleRoot { t, r });
    }
    if !check_monotone(r) {
        return Err(Error::AmbiguousRoot { t, r });
    }
    let k = r * (2.0 + r);
    let a = t * k - 2.0 * r;
    let b = t * ((2.0 + r) * (2.0 + r) + r * r);
    let c = t * k + 2.0 * r;
    let positive: Vec<f64> = numerics::quadratic_roots(a, b, c)
        .into_iter()
        .filter(|x| *x > 0.0 && x.is_finite())
        .collect();
    match positive.as_slice() {
        [] => Err(Error::NoAdmissibleRoot { t, r }),
        [x] => Ok(*x),
        many => {
            // lambda < 1 iff t < 0
            let consistent: Vec<f64> = many
                .iter()
                .copied()
                .filter(|&x| (x < 1.0) == (t < 0.0))
                .collect();
            match consistent.as_slice() {
                [x] => Ok(*x),
                _ => Err(Error::AmbiguousRoot { t, r }),
            }
        }
    }
}

/// TPF point estimate; `log_estimate = log(lambda_hat)`.
pub fn tpf_estimate(data: &ParallelData, opts: &AnalysisOptions) -> Result<EstimateReport> {
    let (t, r) = tpf_statistic(data)?;
    let lambda = tpf_solve(t, r)?;
    let mut report = EstimateReport::point(Method::Tpf, lambda.ln(), opts.alpha);
    report.diagnose("t_statistic", t);
    report.diagnose("r", r);
    report.diagnose("m", data.m());
    report.diagnose("m1", data.m1());
    if data.m() != 2 * data.m1() {
        report.warn("TPF approximation assumes equal arms; m != 2 m1");
    }
    Ok(report)
}

/// Enumeration-based decomposition of the TPF bias for a known table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpfBiasDecomposition {
    /// `(1/m) sum (lambda - 1) U_i / ((lambda + U_i)(1 + U_i))`.
    pub expected_t_closed_form: f64,
    /// `E[T]` by enumeration.
    pub expected_t: f64,
    /// `E[E_T(lambda, r)]` by enumeration.
    pub expected_approximation: f64,
    /// `E[T - E_T]`.
    pub gap: f64,
    /// `E[log lambda_hat] - log lambda` over assignments where the solver succeeds.
    pub log_bias: f64,
    pub unsolvable: usize,
}

pub fn tpf_bias_decomposition(
    table: &PotentialTable,
    m1: usize,
    cap: u128,
) -> Result<TpfBiasDecomposition> {
    let lambda = table.lambda();
    let u = table.negative_positive_ratios();
    let m = table.m();
    let closed = u
        .iter()
        .map(|&ui| (lambda - 1.0) * ui / ((lambda + ui) * (1.0 + ui)))
        .sum::<f64>()
        / m as f64;
    let scheme = AssignmentScheme::parallel(m, m1)?;
    let (mut sum_t, mut sum_e, mut sum_log, mut n, mut solved) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for a in scheme.enumerate(cap)? {
        let data = table.realize(&a)?;
        let (t, r) = tpf_statistic(&data)?;
        sum_t += t;
        sum_e += tpf_expected(lambda, r);
        if let Ok(l) = tpf_solve(t, r) {
            sum_log += l.ln();
            solved += 1;
        }
        n += 1;
    }
    let expected_t = sum_t / n as f64;
    let expected_approximation = sum_e / n as f64;
    Ok(TpfBiasDecomposition {
        expected_t_closed_form: closed,
        expected_t,
        expected_approximation,
        gap: expected_t - expected_approximation,
        log_bias: if solved > 0 {
            sum_log / solved as f64 - lambda.ln()
        } else {
            f64::NAN
        },
        unsolvable: n - solved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClusterRecord, PotentialCluster};

    #[test]
    fn zero_statistic_gives_one() {
        for r in [0.1, 1.0, 3.0, 50.0] {
            assert_eq!(tpf_solve(0.0, r).unwrap(), 1.0);
        }
    }

    #[test]
    fn half_at_r_one() {
        // E_T(0.5, 1) = 2 (0.25 - 1) / ((1.5 + 1)(0.5 + 3)) = -1.5 / 8.75
        let t = -1.5 / 8.75;
        assert!((tpf_expected(0.5, 1.0) - t).abs() < 1e-15);
        assert!((t - -0.171_428_57).abs() < 1e-8);
        assert!((tpf_solve(t, 1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn round_trip_r3() {
        let t = tpf_expected(0.2, 3.0);
        assert!((tpf_solve(t, 3.0).unwrap() - 0.2).abs() < 1e-10);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(
            tpf_solve(0.9, 3.0),
            Err(Error::NoAdmissibleRoot { .. })
        ));
        assert!(matches!(
            tpf_solve(0.1, 0.0),
            Err(Error::NoAdmissibleRoot { .. })
        ));
    }

    #[test]
    fn statistic_examples() {
        // treated fractions {0.5, 0.3}, control {0.2, 0.4}
        let recs = vec![
            ClusterRecord::new("a", true, 5.0, 5.0),
            ClusterRecord::new("b", true, 3.0, 7.0),
            ClusterRecord::new("c", false, 2.0, 8.0),
            ClusterRecord::new("d", false, 4.0, 6.0),
        ];
        let (t, r) = tpf_statistic(&ParallelData::new(recs).unwrap()).unwrap();
        assert!((t - 0.1).abs() < 1e-15);
        assert!((r - 26.0 / 14.0).abs() < 1e-15);

        let same = vec![
            ClusterRecord::new("a", true, 25.0, 75.0),
            ClusterRecord::new("b", false, 75.0, 225.0),
        ];
        let (t, r) = tpf_statistic(&ParallelData::new(same).unwrap()).unwrap();
        assert_eq!(t, 0.0);
        assert!((r - 3.0).abs() < 1e-15);

        let empty = vec![
            ClusterRecord::new("a", true, 0.0, 0.0),
            ClusterRecord::new("b", false, 1.0, 1.0),
        ];
        assert!(matches!(
            tpf_statistic(&ParallelData::new(empty).unwrap()),
            Err(Error::EmptyCluster { .. })
        ));
    }

    #[test]
    fn closed_form_first_term_matches_enumerated_mean() {
        let clusters = [(10.0, 30.0, 0.4), (25.0, 40.0, 1.3), (7.0, 50.0, 0.2), (12.0, 12.0, 2.0)]
            .iter()
            .enumerate()
            .map(|(i, &(oy0, oz0, c))| PotentialCluster {
                cluster_id: format!("c{i}"),
                oy0,
                oz0,
                c,
                covariates: vec![],
            })
            .collect();
        let table = PotentialTable::new(0.3, clusters).unwrap();
        let d = tpf_bias_decomposition(&table, 2, 1000).unwrap();
        assert!((d.expected_t - d.expected_t_closed_form).abs() < 1e-14);
        let null = tpf_bias_decomposition(&table.with_lambda(1.0).unwrap(), 2, 1000).unwrap();
        assert!(null.expected_t.abs() < 1e-15);
    }
}
