//! Exact and Monte Carlo permutation tests.
//!
//! Statistics are computed from null-imputed outcomes that do not move with
//! the assignment, so re-randomizing only relabels the arms. Tail counts use
//! a tolerance of `1e-9 * max(1, |scale|)` when comparing against the
//! observed statistic so that ties survive floating-point reordering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::null::{impute_null_counts, impute_null_outcomes, NullAdjustment, NullKind, NullSpec};
use crate::assignment::{Assignment, AssignmentScheme, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::estimators::{
    odds_ratio_from_counts, tpf_expected, tpf_statistic_from_counts, Adjustment, ContrastDesign,
};
use crate::model::ParallelData;
use crate::rng::{self, domain};
use crate::stats;

/// Draws per Monte Carlo block; each block has its own random stream.
const MC_BLOCK: usize = 1024;
/// Largest design handled by the split-half subset-sum counter.
const SPLIT_COUNT_MAX_M: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PermutationMode {
    Exact { cap: u64 },
    MonteCarlo { n_draws: usize, seed: u64 },
}

impl PermutationMode {
    pub fn exact() -> Self {
        PermutationMode::Exact {
            cap: DEFAULT_ENUMERATION_CAP as u64,
        }
    }

    pub fn monte_carlo(n_draws: usize, seed: u64) -> Self {
        PermutationMode::MonteCarlo { n_draws, seed }
    }
}

/// Statistic to permute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Difference in means of the imputed log-contrasts, covariate adjusted
    /// when the null asks for it.
    Contrast,
    /// `log OR - log(lambda0)`.
    OddsRatio,
    /// `T - E_T(lambda0, r)`.
    Tpf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed_stat: f64,
    pub null_draws: u64,
    pub p_two_sided: f64,
    pub p_left: f64,
    pub p_right: f64,
    pub mode: PermutationMode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct TailCounts {
    n: u64,
    abs: u64,
    left: u64,
    right: u64,
}

impl TailCounts {
    fn add(&mut self, t: f64, obs: f64, tol: f64) {
        self.n += 1;
        if t.abs() >= obs.abs() - tol {
            self.abs += 1;
        }
        if t <= obs + tol {
            self.left += 1;
        }
        if t >= obs - tol {
            self.right += 1;
        }
    }

    fn merge(self, o: TailCounts) -> TailCounts {
        TailCounts {
            n: self.n + o.n,
            abs: self.abs + o.abs,
            left: self.left + o.left,
            right: self.right + o.right,
        }
    }

    fn result(self, observed_stat: f64, mode: PermutationMode) -> PermutationResult {
        let (num, den) = match mode {
            PermutationMode::Exact { .. } => (0.0, 0.0),
            PermutationMode::MonteCarlo { .. } => (1.0, 1.0),
        };
        let p = |c: u64| ((num + c as f64) / (den + self.n as f64)).min(1.0);
        PermutationResult {
            observed_stat,
            null_draws: self.n,
            p_two_sided: p(self.abs),
            p_left: p(self.left),
            p_right: p(self.right),
            mode,
        }
    }
}

fn tolerance(scale: f64) -> f64 {
    1e-9 * scale.abs().max(1.0)
}

/// Runs `stat` over the support of `scheme` (or a uniform sample of it) and
/// compares against `observed`. Assignments are passed in the scheme's own
/// coding (0/1 or start periods).
pub fn permutation_distribution_test<F>(
    scheme: &AssignmentScheme,
    observed: f64,
    scale: f64,
    mode: PermutationMode,
    stat: F,
) -> Result<PermutationResult>
where
    F: Fn(&Assignment) -> Result<f64> + Sync,
{
    let tol = tolerance(scale);
    let counts = match mode {
        PermutationMode::Exact { cap } => {
            let mut c = TailCounts::default();
            for a in scheme.enumerate(cap as u128)? {
                c.add(stat(&a)?, observed, tol);
            }
            c
        }
        PermutationMode::MonteCarlo { n_draws, seed } => {
            monte_carlo_blocks(scheme, n_draws, seed, |a, c: &mut TailCounts| {
                c.add(stat(a)?, observed, tol);
                Ok(())
            })?
            .into_iter()
            .fold(TailCounts::default(), TailCounts::merge)
        }
    };
    Ok(counts.result(observed, mode))
}

/// Evaluates `f` on `n_draws` uniform assignments, in blocks with their own
/// streams, returning one accumulator per block in block order.
fn monte_carlo_blocks<A, F>(
    scheme: &AssignmentScheme,
    n_draws: usize,
    seed: u64,
    f: F,
) -> Result<Vec<A>>
where
    A: Default + Send,
    F: Fn(&Assignment, &mut A) -> Result<()> + Sync,
{
    if n_draws == 0 {
        return Err(Error::InvalidInput("n_draws must be positive".into()));
    }
    scheme.validate()?;
    let blocks = n_draws.div_ceil(MC_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, &[domain::PERMUTATION, b as u64]);
            let len = MC_BLOCK.min(n_draws - b * MC_BLOCK);
            let mut acc = A::default();
            for _ in 0..len {
                f(&scheme.sample(&mut rng), &mut acc)?;
            }
            Ok(acc)
        })
        .collect()
}

fn diff_in_means(u: &[f64], a: &Assignment) -> f64 {
    let (mut s1, mut s0, mut n1) = (0.0, 0.0, 0usize);
    for (i, v) in u.iter().enumerate() {
        if a.is_treated(i) {
            s1 += v;
            n1 += 1;
        } else {
            s0 += v;
        }
    }
    s1 / n1 as f64 - s0 / (u.len() - n1) as f64
}

fn subset_sums_by_size(vals: &[f64]) -> Vec<Vec<f64>> {
    let h = vals.len();
    let mut by_size = vec![Vec::new(); h + 1];
    for mask in 0u64..(1u64 << h) {
        let mut s = 0.0;
        for (k, v) in vals.iter().enumerate() {
            if mask >> k & 1 == 1 {
                s += v;
            }
        }
        by_size[mask.count_ones() as usize].push(s);
    }
    for v in &mut by_size {
        v.sort_by(f64::total_cmp);
    }
    by_size
}

/// Exact tail counts of the difference in means of `u` over every
/// assignment with `m1` treated, by splitting the clusters in two halves
/// and matching sorted subset sums. The statistic is increasing in the
/// treated sum `S`: `T = S (1/m1 + 1/m0) - sum(u)/m0`.
fn split_half_counts(u: &[f64], m1: usize, observed: f64, tol: f64) -> TailCounts {
    let m = u.len();
    let m0 = m - m1;
    let k = 1.0 / m1 as f64 + 1.0 / m0 as f64;
    let c0 = u.iter().sum::<f64>() / m0 as f64;
    let to_sum = |t: f64| (t + c0) / k;
    let (front, back) = u.split_at(m / 2);
    let back_sums = subset_sums_by_size(back);

    // counts of treated sums >= hi and <= lo
    let count = |hi: Option<f64>, lo: Option<f64>| -> u64 {
        let mut total = 0u64;
        for mask in 0u64..(1u64 << front.len()) {
            let j = mask.count_ones() as usize;
            if j > m1 || m1 - j > back.len() {
                continue;
            }
            let mut s = 0.0;
            for (b, v) in front.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    s += v;
                }
            }
            let sums = &back_sums[m1 - j];
            if let Some(hi) = hi {
                total += (sums.len() - sums.partition_point(|&x| x < hi - s)) as u64;
            }
            if let Some(lo) = lo {
                total += sums.partition_point(|&x| x <= lo - s) as u64;
            }
        }
        total
    };

    let n = stats::binomial(m as u64, m1 as u64).expect("m <= 40") as u64;
    let left = count(None, Some(to_sum(observed + tol)));
    let right = count(Some(to_sum(observed - tol)), None);
    let bound = observed.abs() - tol;
    let abs = if bound <= 0.0 {
        n
    } else {
        count(Some(to_sum(bound)), Some(to_sum(-bound)))
    };
    TailCounts {
        n,
        abs,
        left,
        right,
    }
}

/// Exact permutation test of the difference in means of a fixed response
/// vector, counting rather than enumerating when `m <= 40`.
pub fn exact_difference_in_means_test(
    u: &[f64],
    treated: &[bool],
    cap: u64,
) -> Result<PermutationResult> {
    let m = u.len();
    let m1 = treated.iter().filter(|&&t| t).count();
    let scheme = AssignmentScheme::parallel(m, m1)?;
    let a = Assignment(treated.iter().map(|&t| t as usize).collect());
    let observed = diff_in_means(u, &a);
    let scale = u.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mode = PermutationMode::Exact { cap };
    if m > SPLIT_COUNT_MAX_M {
        return permutation_distribution_test(&scheme, observed, scale, mode, |a| {
            Ok(diff_in_means(u, a))
        });
    }
    let total = scheme.total_assignments().unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(Error::SupportTooLarge {
            total: total.to_string(),
            cap: cap as u128,
        });
    }
    Ok(split_half_counts(u, m1, observed, tolerance(scale)).result(observed, mode))
}

/// Permutation test of a sharp null.
pub fn permutation_test(
    data: &ParallelData,
    null: &NullSpec,
    statistic: Statistic,
    mode: PermutationMode,
    correction: bool,
) -> Result<PermutationResult> {
    null.validate()?;
    let scheme = AssignmentScheme::parallel(data.m(), data.m1())?;
    let observed_a = data.assignment();
    match statistic {
        Statistic::Contrast => {
            let u = impute_null_outcomes(data, null, correction)?;
            let scale = u.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            match null.adjustment {
                NullAdjustment::None => match mode {
                    PermutationMode::Exact { cap } => {
                        exact_difference_in_means_test(&u, &data.treated(), cap)
                    }
                    PermutationMode::MonteCarlo { .. } => {
                        let observed = diff_in_means(&u, &observed_a);
                        permutation_distribution_test(&scheme, observed, scale, mode, |a| {
                            Ok(diff_in_means(&u, a))
                        })
                    }
                },
                NullAdjustment::Covariates => {
                    let x = data.covariates();
                    let stat = |a: &Assignment| -> Result<f64> {
                        let treated: Vec<bool> = (0..a.len()).map(|i| a.is_treated(i)).collect();
                        Ok(ContrastDesign::new(&treated, &x, Adjustment::Estimated)?
                            .fit(&u)?
                            .estimate)
                    };
                    let observed = stat(&observed_a)?;
                    permutation_distribution_test(&scheme, observed, scale, mode, stat)
                }
            }
        }
        Statistic::OddsRatio | Statistic::Tpf => {
            let lambda0 = match null.kind {
                NullKind::RelativeRisk { lambda0 } => lambda0,
                NullKind::DoseResponse { .. } => {
                    return Err(Error::InvalidInput(
                        "count-based statistics need a relative-risk null".into(),
                    ))
                }
            };
            if null.adjustment == NullAdjustment::Covariates {
                return Err(Error::InvalidInput(
                    "count-based statistics have no covariate-adjusted form".into(),
                ));
            }
            let y0 = impute_null_counts(data, lambda0)?;
            let z: Vec<f64> = data.records().iter().map(|r| r.z_count).collect();
            let ids: Vec<&str> = data.records().iter().map(|r| r.cluster_id.as_str()).collect();
            let log_l0 = lambda0.ln();
            let stat = |a: &Assignment| -> Result<f64> {
                let treated: Vec<bool> = (0..a.len()).map(|i| a.is_treated(i)).collect();
                let y: Vec<f64> = y0
                    .iter()
                    .zip(&treated)
                    .map(|(v, &t)| if t { v * lambda0 } else { *v })
                    .collect();
                let value = if statistic == Statistic::OddsRatio {
                    odds_ratio_from_counts(&y, &z, &treated)
                        .map_err(|e| Error::StatisticUndefined(e.to_string()))?
                        - log_l0
                } else {
                    let (t, r) = tpf_statistic_from_counts(&ids, &y, &z, &treated)
                        .map_err(|e| Error::StatisticUndefined(e.to_string()))?;
                    t - tpf_expected(lambda0, r)
                };
                Ok(value)
            };
            let observed = stat(&observed_a)?;
            permutation_distribution_test(&scheme, observed, 1.0, mode, stat)
        }
    }
}

/// Standard deviation of `log OR` over the permutation distribution with the
/// observed counts held fixed.
pub fn odds_ratio_permutation_sd(data: &ParallelData, mode: PermutationMode) -> Result<f64> {
    let scheme = AssignmentScheme::parallel(data.m(), data.m1())?;
    let y: Vec<f64> = data.records().iter().map(|r| r.y_count).collect();
    let z: Vec<f64> = data.records().iter().map(|r| r.z_count).collect();
    let stat = |a: &Assignment| -> Result<f64> {
        let treated: Vec<bool> = (0..a.len()).map(|i| a.is_treated(i)).collect();
        odds_ratio_from_counts(&y, &z, &treated)
    };
    let values: Vec<f64> = match mode {
        PermutationMode::Exact { cap } => scheme
            .enumerate(cap as u128)?
            .map(|a| stat(&a))
            .collect::<Result<_>>()?,
        PermutationMode::MonteCarlo { n_draws, seed } => {
            monte_carlo_blocks(&scheme, n_draws, seed, |a, acc: &mut Vec<f64>| {
                acc.push(stat(a)?);
                Ok(())
            })?
            .concat()
        }
    };
    Ok(match mode {
        PermutationMode::Exact { .. } => stats::population_variance(&values).sqrt(),
        PermutationMode::MonteCarlo { .. } => stats::sample_variance(&values).sqrt(),
    })
}
