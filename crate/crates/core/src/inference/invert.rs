//! Confidence sets by test inversion: `{theta0 : p(theta0) > alpha}`.

use serde::{Deserialize, Serialize};

use super::null::NullSpec;
use super::permutation::{permutation_test, PermutationMode, Statistic};
use crate::error::{Error, Result};
use crate::model::ParallelData;

pub const DEFAULT_GRID_POINTS: usize = 2001;
const PRESCAN_POINTS: usize = 201;
const BISECTION_TOL: f64 = 1e-6;
/// Initial and maximal half-widths of the search window, in standard errors.
const START_WIDTH: f64 = 10.0;
const MAX_WIDTH: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "search", rename_all = "snake_case")]
pub enum SearchMethod {
    Grid { points: usize },
    Bisection { tol: f64 },
}

impl Default for SearchMethod {
    fn default() -> Self {
        SearchMethod::Grid {
            points: DEFAULT_GRID_POINTS,
        }
    }
}

impl SearchMethod {
    pub fn bisection() -> Self {
        SearchMethod::Bisection {
            tol: BISECTION_TOL,
        }
    }
}

/// Interval on the parameter scale of the inverted test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub low: f64,
    pub high: f64,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |k| if k + 1 == n { hi } else { lo + step * k as f64 })
}

struct Scan {
    thetas: Vec<f64>,
    accepted: Vec<bool>,
}

impl Scan {
    fn run<F: FnMut(f64) -> Result<f64>>(p: &mut F, lo: f64, hi: f64, n: usize, alpha: f64) -> Result<Self> {
        let thetas: Vec<f64> = linspace(lo, hi, n).collect();
        let accepted = thetas
            .iter()
            .map(|&t| Ok(p(t)? > alpha))
            .collect::<Result<_>>()?;
        Ok(Scan { thetas, accepted })
    }

    fn first(&self) -> Option<usize> {
        self.accepted.iter().position(|&a| a)
    }

    fn last(&self) -> Option<usize> {
        self.accepted.iter().rposition(|&a| a)
    }

    /// Accepted run containing the grid point nearest `estimate`, or the
    /// outermost accepted points when that point is rejected.
    fn component(&self, estimate: f64) -> Option<(usize, usize)> {
        let (first, last) = (self.first()?, self.last()?);
        let centre = self
            .thetas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - estimate).abs().total_cmp(&(b.1 - estimate).abs()))
            .map(|(k, _)| k)?;
        if !self.accepted[centre] {
            return Some((first, last));
        }
        let mut a = centre;
        while a > 0 && self.accepted[a - 1] {
            a -= 1;
        }
        let mut b = centre;
        while b + 1 < self.accepted.len() && self.accepted[b + 1] {
            b += 1;
        }
        Some((a, b))
    }

    fn contiguous(&self) -> bool {
        match (self.first(), self.last()) {
            (Some(a), Some(b)) => self.accepted[a..=b].iter().all(|&x| x),
            _ => true,
        }
    }
}

/// Inverts the test with p-value `p(theta0)`.
///
/// The reported interval is the accepted run of the scan that contains the
/// estimate. Far-off acceptance regions, which bounded statistics such as the
/// TPF produce once the null value leaves the range the data can speak to,
/// are excluded with a warning. When the estimate itself is rejected the
/// outermost accepted points are used.
///
/// Without explicit `bounds` the window starts at `estimate -/+ 10 se` and is
/// widened in steps of `10 se` up to `50 se` while that run touches an edge.
pub fn invert_ci<F>(
    mut p: F,
    estimate: f64,
    se: f64,
    alpha: f64,
    search: SearchMethod,
    bounds: Option<(f64, f64)>,
) -> Result<Inversion>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let scan_points = match search {
        SearchMethod::Grid { points } => points.max(3),
        SearchMethod::Bisection { .. } => PRESCAN_POINTS,
    };
    let mut evaluations = 0usize;
    let mut counted = |t: f64| {
        evaluations += 1;
        p(t)
    };

    let (mut width, fixed) = match bounds {
        Some((lo, hi)) if lo < hi => (0.0, Some((lo, hi))),
        Some(_) => return Err(Error::InvalidInput("inversion bounds must satisfy lo < hi".into())),
        None if se > 0.0 && se.is_finite() => (START_WIDTH, None),
        None => {
            return Err(Error::InvalidInput(
                "inversion needs a positive standard error or explicit bounds".into(),
            ))
        }
    };
    let mut warnings = Vec::new();
    let (scan, first, last) = loop {
        let (lo, hi) = fixed.unwrap_or((estimate - width * se, estimate + width * se));
        let scan = Scan::run(&mut counted, lo, hi, scan_points, alpha)?;
        let Some((first, last)) = scan.component(estimate) else {
            return Err(Error::NoNonRejectedPoint { low: lo, high: hi, alpha });
        };
        let open = first == 0 || last + 1 == scan.thetas.len();
        if open && fixed.is_none() && width < MAX_WIDTH {
            width += START_WIDTH;
            continue;
        }
        if open {
            return Err(Error::UnboundedConfidenceSet);
        }
        break (scan, first, last);
    };
    if !scan.contiguous() {
        warnings.push(format!(
            "{}; reporting the accepted interval around the estimate",
            Error::NonUnimodalPValue
        ));
    }

    let result = match search {
        SearchMethod::Grid { .. } => (scan.thetas[first], scan.thetas[last]),
        SearchMethod::Bisection { tol } => {
            let mut refine = |mut rejected: f64, mut accepted: f64| -> Result<f64> {
                while (rejected - accepted).abs() > tol {
                    let mid = 0.5 * (rejected + accepted);
                    if counted(mid)? > alpha {
                        accepted = mid;
                    } else {
                        rejected = mid;
                    }
                }
                Ok(accepted)
            };
            let low = refine(scan.thetas[first - 1], scan.thetas[first])?;
            let high = refine(scan.thetas[last + 1], scan.thetas[last])?;
            (low, high)
        }
    };
    Ok(Inversion {
        low: result.0,
        high: result.1,
        evaluations,
        warnings,
    })
}

/// Permutation-test inversion for `log(lambda)`.
#[allow(clippy::too_many_arguments)]
pub fn invert_permutation_ci(
    data: &ParallelData,
    statistic: Statistic,
    covariates: bool,
    mode: PermutationMode,
    correction: bool,
    estimate: f64,
    se: f64,
    alpha: f64,
    search: SearchMethod,
) -> Result<Inversion> {
    invert_ci(
        |theta| {
            let mut null = NullSpec::relative_risk(theta.exp())?;
            if covariates {
                null = null.with_covariates();
            }
            Ok(permutation_test(data, &null, statistic, mode, correction)?.p_two_sided)
        },
        estimate,
        se,
        alpha,
        search,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn normal_p(est: f64, se: f64) -> impl FnMut(f64) -> Result<f64> {
        move |t| Ok(stats::two_sided_normal_p((est - t) / se))
    }

    #[test]
    fn grid_matches_closed_form() {
        let (est, se) = (0.3, 0.2);
        let inv = invert_ci(normal_p(est, se), est, se, 0.05, SearchMethod::default(), None).unwrap();
        let z = stats::normal_critical(0.05);
        let step = 20.0 * se / (DEFAULT_GRID_POINTS - 1) as f64;
        assert!((inv.low - (est - z * se)).abs() <= step);
        assert!((inv.high - (est + z * se)).abs() <= step);
    }

    #[test]
    fn bisection_matches_closed_form() {
        let (est, se) = (-1.0, 0.5);
        let inv = invert_ci(normal_p(est, se), est, se, 0.1, SearchMethod::bisection(), None).unwrap();
        let z = stats::normal_critical(0.1);
        assert!((inv.low - (est - z * se)).abs() < 2e-6);
        assert!((inv.high - (est + z * se)).abs() < 2e-6);
    }

    #[test]
    fn nothing_accepted() {
        let r = invert_ci(|_| Ok(0.0), 0.0, 1.0, 0.05, SearchMethod::default(), None);
        assert!(matches!(r, Err(Error::NoNonRejectedPoint { .. })));
    }

    #[test]
    fn everything_accepted_is_unbounded() {
        let r = invert_ci(|_| Ok(1.0), 0.0, 1.0, 0.05, SearchMethod::default(), None);
        assert_eq!(r, Err(Error::UnboundedConfidenceSet));
    }

    #[test]
    fn non_unimodal_falls_back_to_grid() {
        // accepted on two disjoint pieces
        let p = |t: f64| Ok(if (t.abs() - 1.0).abs() < 0.5 { 0.5 } else { 0.0 });
        let inv = invert_ci(p, 0.0, 0.2, 0.05, SearchMethod::bisection(), None).unwrap();
        assert_eq!(inv.warnings.len(), 1);
        assert!(inv.low < -1.4 && inv.high > 1.4);
    }

    #[test]
    fn far_acceptance_is_excluded() {
        let p = |t: f64| Ok(if t.abs() < 1.0 || t.abs() > 3.0 { 0.5 } else { 0.0 });
        for search in [SearchMethod::default(), SearchMethod::bisection()] {
            let inv = invert_ci(p, 0.0, 0.5, 0.05, search, None).unwrap();
            assert_eq!(inv.warnings.len(), 1);
            assert!((inv.low + 1.0).abs() < 0.01 && (inv.high - 1.0).abs() < 0.01, "{inv:?}");
        }
    }

    #[test]
    fn window_widens() {
        // true interval is far wider than 10 se
        let inv = invert_ci(normal_p(0.0, 3.0), 0.0, 0.2, 0.05, SearchMethod::default(), None).unwrap();
        assert!((inv.high - 1.959_964 * 3.0).abs() < 0.02);
    }
}
