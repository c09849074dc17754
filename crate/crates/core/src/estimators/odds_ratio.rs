use super::report::{AnalysisOptions, EstimateReport, Method};
use crate::assignment::AssignmentScheme;
use crate::error::{Error, Result};
use crate::model::{ParallelData, PotentialTable};

/// Log of the pooled odds ratio `(Y_1 / Y_0) * (Z_0 / Z_1)` from arm totals.
pub fn odds_ratio_from_counts(y: &[f64], z: &[f64], treated: &[bool]) -> Result<f64> {
    let (mut y1, mut y0, mut z1, mut z0) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        if treated[i] {
            y1 += y[i];
            z1 += z[i];
        } else {
            y0 += y[i];
            z0 += z[i];
        }
    }
    for (v, which) in [
        (y1, "treated test-positives"),
        (y0, "control test-positives"),
        (z1, "treated test-negatives"),
        (z0, "control test-negatives"),
    ] {
        if v <= 0.0 {
            return Err(Error::ZeroArmTotal { which });
        }
    }
    Ok(y1.ln() - y0.ln() + z0.ln() - z1.ln())
}

/// Odds-ratio point estimate. No analytic standard error is attached; see
/// `inference::odds_ratio_permutation_sd`.
pub fn odds_ratio_estimate(data: &ParallelData, opts: &AnalysisOptions) -> Result<EstimateReport> {
    if data.m1() == 0 || data.m0() == 0 {
        return Err(Error::ArmTooSmall {
            arm: if data.m1() == 0 { "treated" } else { "control" }.into(),
            size: 0,
            required: 1,
        });
    }
    let y: Vec<f64> = data.records().iter().map(|r| r.y_count).collect();
    let z: Vec<f64> = data.records().iter().map(|r| r.z_count).collect();
    let log_or = odds_ratio_from_counts(&y, &z, &data.treated())?;
    let mut report = EstimateReport::point(Method::OddsRatio, log_or, opts.alpha);
    report.diagnose("m", data.m());
    report.diagnose("m1", data.m1());
    Ok(report)
}

/// Exact bias `E[log OR] - log(lambda)` over the assignment support, from
/// the closed expression in control-arm potential counts and `c_i`:
/// `E log{ (sum c A O^Y(0) / sum (1-A) O^Y(0)) (sum (1-A) O^Z(0) / sum c A O^Z(0)) }`.
pub fn odds_ratio_bias(table: &PotentialTable, m1: usize, cap: u128) -> Result<f64> {
    let scheme = AssignmentScheme::parallel(table.m(), m1)?;
    let mut total = 0.0;
    let mut n = 0usize;
    for a in scheme.enumerate(cap)? {
        let (mut num_y, mut den_y, mut num_z, mut den_z) = (0.0, 0.0, 0.0, 0.0);
        for (i, c) in table.clusters().iter().enumerate() {
            if a.is_treated(i) {
                num_y += c.c * c.oy0;
                den_z += c.c * c.oz0;
            } else {
                den_y += c.oy0;
                num_z += c.oz0;
            }
        }
        total += (num_y / den_y * num_z / den_z).ln();
        n += 1;
    }
    Ok(total / n as f64)
}
