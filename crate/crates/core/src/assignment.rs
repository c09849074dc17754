//! Randomization schemes and their assignment supports.
//!
//! An [`Assignment`] stores one value per cluster position: `0`/`1` for a
//! parallel design, the intervention start period (`1..=T`) for a stepped
//! wedge. Positions follow the cluster order of the dataset, which is always
//! sorted by cluster id.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Default cap on exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    /// Parallel designs: cluster `i` is in the intervention arm.
    pub fn is_treated(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    /// Stepped-wedge designs: cluster `i` is under intervention at period `t`.
    pub fn treated_at(&self, i: usize, t: usize) -> bool {
        t >= self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssignmentScheme {
    /// Complete randomization of `m1` out of `m` clusters to intervention.
    Parallel { m: usize, m1: usize },
    /// Staggered rollout: `q[t-1]` clusters start intervention at period `t`.
    SteppedWedge { q: Vec<usize> },
}

impl AssignmentScheme {
    pub fn parallel(m: usize, m1: usize) -> Result<Self> {
        let s = AssignmentScheme::Parallel { m, m1 };
        s.validate()?;
        Ok(s)
    }

    pub fn stepped_wedge(q: Vec<usize>) -> Result<Self> {
        let s = AssignmentScheme::SteppedWedge { q };
        s.validate()?;
        Ok(s)
    }

    /// Periods `t < T` where some cluster is treated and some is not are
    /// analysis periods; a valid stepped wedge needs at least one of them.
    /// Periods outside that range are dropped by the estimators.
    pub fn validate(&self) -> Result<()> {
        match self {
            AssignmentScheme::Parallel { m, m1 } => {
                if *m1 == 0 || m1 >= m {
                    return Err(Error::InvalidScheme(format!(
                        "parallel design needs 1 <= m1 <= m - 1, got m = {m}, m1 = {m1}"
                    )));
                }
            }
            AssignmentScheme::SteppedWedge { q } => {
                if q.len() < 2 {
                    return Err(Error::InvalidScheme(
                        "stepped wedge needs at least two periods".into(),
                    ));
                }
                if self.analysis_periods().is_empty() {
                    return Err(Error::InvalidScheme(format!(
                        "start counts {q:?} leave no period with both treated and control clusters"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        match self {
            AssignmentScheme::Parallel { m, .. } => *m,
            AssignmentScheme::SteppedWedge { q } => q.iter().sum(),
        }
    }

    /// Number of periods `T` (1 for parallel designs).
    pub fn periods(&self) -> usize {
        match self {
            AssignmentScheme::Parallel { .. } => 1,
            AssignmentScheme::SteppedWedge { q } => q.len(),
        }
    }

    /// Cumulative treated counts `m_t` for `t = 1..=T`.
    pub fn group_sizes(&self) -> Vec<usize> {
        match self {
            AssignmentScheme::Parallel { m1, .. } => vec![*m1],
            AssignmentScheme::SteppedWedge { q } => q
                .iter()
                .scan(0, |acc, &x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect(),
        }
    }

    /// Periods `t in 1..T` with `1 <= m_t <= m - 1`.
    pub fn analysis_periods(&self) -> Vec<usize> {
        let m = self.m();
        let sizes = self.group_sizes();
        (1..self.periods())
            .filter(|&t| sizes[t - 1] >= 1 && sizes[t - 1] < m)
            .collect()
    }

    /// Exact size of the support, `None` when it does not fit in `u128`.
    pub fn total_assignments(&self) -> Option<u128> {
        match self {
            AssignmentScheme::Parallel { m, m1 } => stats::binomial(*m as u64, *m1 as u64),
            AssignmentScheme::SteppedWedge { q } => stats::multinomial(q),
        }
    }

    /// Lexicographically smallest support element.
    pub fn base_assignment(&self) -> Assignment {
        Assignment(self.base())
    }

    fn base(&self) -> Vec<usize> {
        match self {
            AssignmentScheme::Parallel { m, m1 } => {
                let mut v = vec![0; m - m1];
                v.extend(std::iter::repeat_n(1, *m1));
                v
            }
            AssignmentScheme::SteppedWedge { q } => q
                .iter()
                .enumerate()
                .flat_map(|(t, &n)| std::iter::repeat_n(t + 1, n))
                .collect(),
        }
    }

    /// Exhaustive stream of the support in lexicographic order of the
    /// assignment vectors.
    pub fn enumerate(&self, cap: u128) -> Result<AssignmentIter> {
        self.validate()?;
        match self.total_assignments() {
            Some(total) if total <= cap => Ok(AssignmentIter {
                next: Some(self.base()),
            }),
            Some(total) => Err(Error::SupportTooLarge {
                total: total.to_string(),
                cap,
            }),
            None => Err(Error::SupportTooLarge {
                total: "> 2^128".into(),
                cap,
            }),
        }
    }

    /// Uniform draw from the support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        let mut v = self.base();
        v.shuffle(rng);
        Assignment(v)
    }

    /// The scheme implied by an observed assignment.
    pub fn from_parallel_assignment(a: &Assignment) -> Result<Self> {
        let m1 = a.values().iter().filter(|&&v| v == 1).count();
        Self::parallel(a.len(), m1)
    }
}

/// Iterator over every support element exactly once.
#[derive(Debug, Clone)]
pub struct AssignmentIter {
    next: Option<Vec<usize>>,
}

impl Iterator for AssignmentIter {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_permutation(&mut succ) {
            self.next = Some(succ);
        }
        Some(Assignment(current))
    }
}

/// Advances `v` to its lexicographic successor among the permutations of
/// the same multiset. Returns `false` at the last permutation.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn enumeration_counts() {
        let p = AssignmentScheme::parallel(4, 2).unwrap();
        let all: Vec<_> = p.enumerate(DEFAULT_ENUMERATION_CAP).unwrap().collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].values(), &[0, 0, 1, 1]);
        assert_eq!(all[5].values(), &[1, 1, 0, 0]);
        let distinct: HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 6);

        let sw = AssignmentScheme::stepped_wedge(vec![1, 1, 1]).unwrap();
        assert_eq!(sw.enumerate(DEFAULT_ENUMERATION_CAP).unwrap().count(), 6);

        let big = AssignmentScheme::parallel(24, 12).unwrap();
        assert_eq!(big.total_assignments(), Some(2_704_156));
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let sw = AssignmentScheme::stepped_wedge(vec![2, 1, 2]).unwrap();
        let all: Vec<_> = sw.enumerate(DEFAULT_ENUMERATION_CAP).unwrap().collect();
        assert_eq!(all.len() as u128, sw.total_assignments().unwrap());
        for w in all.windows(2) {
            assert!(w[0].values() < w[1].values());
        }
    }

    #[test]
    fn cap_is_enforced() {
        let big = AssignmentScheme::parallel(30, 15).unwrap();
        assert!(matches!(
            big.enumerate(1000),
            Err(Error::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn invalid_schemes() {
        assert!(AssignmentScheme::parallel(4, 0).is_err());
        assert!(AssignmentScheme::parallel(4, 4).is_err());
        assert!(AssignmentScheme::stepped_wedge(vec![0, 0, 4]).is_err());
        assert!(AssignmentScheme::stepped_wedge(vec![4]).is_err());
        // q_1 = 0 is allowed; period 1 is simply not an analysis period
        let sw = AssignmentScheme::stepped_wedge(vec![0, 3, 3, 3]).unwrap();
        assert_eq!(sw.analysis_periods(), vec![2, 3]);
    }

    #[test]
    fn sampling_is_uniform_for_two_clusters() {
        let s = AssignmentScheme::parallel(2, 1).unwrap();
        let mut r = rng::stream(11, &[0]);
        let n = 10_000;
        let first = (0..n).filter(|_| s.sample(&mut r).is_treated(0)).count();
        let freq = first as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01 + 3.0 * (0.25f64 / n as f64).sqrt(), "{freq}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = AssignmentScheme::parallel(10, 4).unwrap();
        let draw = |seed| {
            let mut r = rng::stream(seed, &[9]);
            (0..20).map(|_| s.sample(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn sampling_passes_chi_square_over_c42() {
        // 5 degrees of freedom, upper 0.001 critical value 20.515
        let s = AssignmentScheme::parallel(4, 2).unwrap();
        let mut r = rng::stream(2024, &[1]);
        let n = 100_000;
        let mut counts: HashMap<Assignment, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(s.sample(&mut r)).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = n as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 20.515, "chi2 = {chi2}");
    }
}
