//! Cluster-level data and the potential-count model.
//!
//! Under intervention the observed counts of cluster `i` scale as
//! `O^Y(1) = lambda * c_i * O^Y(0)` and `O^Z(1) = c_i * O^Z(0)`, where `c_i`
//! is the relative ascertainment. The log-contrast `L = log O^Y - log O^Z`
//! therefore shifts by exactly `log lambda`, whatever `c_i` is.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::error::{Error, Result};

/// Added to both counts when continuity correction is enabled.
pub const CONTINUITY_CORRECTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub cluster_id: String,
    pub treated: bool,
    pub y_count: f64,
    pub z_count: f64,
    pub covariates: Vec<f64>,
    pub dose: Option<f64>,
}

impl ClusterRecord {
    pub fn new(cluster_id: impl Into<String>, treated: bool, y_count: f64, z_count: f64) -> Self {
        Self {
            cluster_id: cluster_id.into(),
            treated,
            y_count,
            z_count,
            covariates: Vec::new(),
            dose: None,
        }
    }

    pub fn with_covariates(mut self, covariates: Vec<f64>) -> Self {
        self.covariates = covariates;
        self
    }

    pub fn with_dose(mut self, dose: f64) -> Self {
        self.dose = Some(dose);
        self
    }
}

/// `log(y) - log(z)`, or `log(y + 0.5) - log(z + 0.5)` with correction.
pub fn log_contrast(record: &ClusterRecord, correction: bool) -> Result<f64> {
    log_contrast_counts(&record.cluster_id, record.y_count, record.z_count, correction)
}

pub(crate) fn log_contrast_counts(id: &str, y: f64, z: f64, correction: bool) -> Result<f64> {
    if correction {
        return Ok((y + CONTINUITY_CORRECTION).ln() - (z + CONTINUITY_CORRECTION).ln());
    }
    if y <= 0.0 || z <= 0.0 {
        return Err(Error::ZeroCount {
            cluster_id: id.to_string(),
        });
    }
    Ok(y.ln() - z.ln())
}

fn check_count(id: &str, what: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidInput(format!(
            "cluster {id}: {what} must be a finite nonnegative number, got {v}"
        )));
    }
    Ok(())
}

/// A parallel-arm dataset, one record per cluster, sorted by cluster id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelData {
    records: Vec<ClusterRecord>,
    n_covariates: usize,
}

impl ParallelData {
    pub fn new(mut records: Vec<ClusterRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("dataset has no clusters".into()));
        }
        let p = records[0].covariates.len();
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.cluster_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate cluster id {}",
                    r.cluster_id
                )));
            }
            check_count(&r.cluster_id, "y_count", r.y_count)?;
            check_count(&r.cluster_id, "z_count", r.z_count)?;
            if r.covariates.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: r.covariates.len(),
                });
            }
            if r.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "cluster {}: non-finite covariate",
                    r.cluster_id
                )));
            }
            if let Some(d) = r.dose {
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::InvalidInput(format!(
                        "cluster {}: dose {d} outside [0, 1]",
                        r.cluster_id
                    )));
                }
            }
        }
        records.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
        Ok(Self {
            records,
            n_covariates: p,
        })
    }

    pub fn records(&self) -> &[ClusterRecord] {
        &self.records
    }

    pub fn m(&self) -> usize {
        self.records.len()
    }

    pub fn m1(&self) -> usize {
        self.records.iter().filter(|r| r.treated).count()
    }

    pub fn m0(&self) -> usize {
        self.m() - self.m1()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn treated(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.treated).collect()
    }

    pub fn assignment(&self) -> Assignment {
        Assignment(self.records.iter().map(|r| r.treated as usize).collect())
    }

    /// Relabels the arms; counts and covariates are kept as they are.
    pub fn with_assignment(&self, a: &Assignment) -> Result<Self> {
        if a.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                found: a.len(),
            });
        }
        let mut out = self.clone();
        for (r, &v) in out.records.iter_mut().zip(a.values()) {
            r.treated = v == 1;
        }
        Ok(out)
    }

    pub fn log_contrasts(&self, correction: bool) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| log_contrast(r, correction))
            .collect()
    }

    pub fn covariates(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.covariates.clone()).collect()
    }

    pub fn doses(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.dose.ok_or_else(|| Error::MissingDose {
                    cluster_id: r.cluster_id.clone(),
                })
            })
            .collect()
    }

    pub fn has_doses(&self) -> bool {
        self.records.iter().all(|r| r.dose.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPeriodRecord {
    pub cluster_id: String,
    pub period: usize,
    pub start_period: usize,
    pub y_count: f64,
    pub z_count: f64,
}

/// A complete stepped-wedge panel: every cluster observed at periods `1..=T`.
///
/// Cluster `i` is under intervention at period `t` iff `t >= start[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    cluster_ids: Vec<String>,
    start: Vec<usize>,
    periods: usize,
    // row-major m x T
    y: Vec<f64>,
    z: Vec<f64>,
}

impl Panel {
    pub fn from_records(records: &[ClusterPeriodRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("panel has no records".into()));
        }
        let periods = records.iter().map(|r| r.period).max().unwrap_or(0);
        let mut cells: BTreeMap<&str, (usize, BTreeMap<usize, (f64, f64)>)> = BTreeMap::new();
        for r in records {
            if r.period == 0 {
                return Err(Error::InvalidInput(format!(
                    "cluster {}: periods are numbered from 1",
                    r.cluster_id
                )));
            }
            check_count(&r.cluster_id, "y_count", r.y_count)?;
            check_count(&r.cluster_id, "z_count", r.z_count)?;
            let entry = cells
                .entry(r.cluster_id.as_str())
                .or_insert_with(|| (r.start_period, BTreeMap::new()));
            if entry.0 != r.start_period {
                return Err(Error::InvalidInput(format!(
                    "cluster {}: inconsistent start_period ({} vs {})",
                    r.cluster_id, entry.0, r.start_period
                )));
            }
            if entry.1.insert(r.period, (r.y_count, r.z_count)).is_some() {
                return Err(Error::InvalidInput(format!(
                    "cluster {}: duplicate record for period {}",
                    r.cluster_id, r.period
                )));
            }
        }
        let mut panel = Panel {
            cluster_ids: Vec::with_capacity(cells.len()),
            start: Vec::with_capacity(cells.len()),
            periods,
            y: Vec::with_capacity(cells.len() * periods),
            z: Vec::with_capacity(cells.len() * periods),
        };
        for (id, (start, by_period)) in cells {
            if start < 1 || start > periods {
                return Err(Error::InvalidInput(format!(
                    "cluster {id}: start_period {start} outside 1..={periods}"
                )));
            }
            for t in 1..=periods {
                let (y, z) = by_period.get(&t).ok_or_else(|| Error::IncompletePanel {
                    cluster_id: id.to_string(),
                    period: t,
                })?;
                panel.y.push(*y);
                panel.z.push(*z);
            }
            panel.cluster_ids.push(id.to_string());
            panel.start.push(start);
        }
        Ok(panel)
    }

    pub fn to_records(&self) -> Vec<ClusterPeriodRecord> {
        let mut out = Vec::with_capacity(self.y.len());
        for (i, id) in self.cluster_ids.iter().enumerate() {
            for t in 1..=self.periods {
                out.push(ClusterPeriodRecord {
                    cluster_id: id.clone(),
                    period: t,
                    start_period: self.start[i],
                    y_count: self.y_count(i, t),
                    z_count: self.z_count(i, t),
                });
            }
        }
        out
    }

    pub fn m(&self) -> usize {
        self.cluster_ids.len()
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    pub fn start_periods(&self) -> &[usize] {
        &self.start
    }

    pub fn assignment(&self) -> Assignment {
        Assignment(self.start.clone())
    }

    pub fn y_count(&self, i: usize, t: usize) -> f64 {
        self.y[i * self.periods + t - 1]
    }

    pub fn z_count(&self, i: usize, t: usize) -> f64 {
        self.z[i * self.periods + t - 1]
    }

    pub fn treated_at(&self, i: usize, t: usize) -> bool {
        t >= self.start[i]
    }

    /// Number of clusters under intervention at period `t`.
    pub fn treated_count(&self, t: usize) -> usize {
        self.start.iter().filter(|&&s| s <= t).count()
    }

    /// Start counts `q_t` observed in the panel.
    pub fn start_counts(&self) -> Vec<usize> {
        let mut q = vec![0; self.periods];
        for &s in &self.start {
            q[s - 1] += 1;
        }
        q
    }

    /// `L[i][t-1]` for every cluster and period.
    pub fn log_contrasts(&self, correction: bool) -> Result<Vec<Vec<f64>>> {
        (0..self.m())
            .map(|i| {
                (1..=self.periods)
                    .map(|t| {
                        log_contrast_counts(
                            &self.cluster_ids[i],
                            self.y_count(i, t),
                            self.z_count(i, t),
                            correction,
                        )
                    })
                    .collect()
            })
            .collect()
    }

    pub fn with_assignment(&self, a: &Assignment) -> Result<Self> {
        if a.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                found: a.len(),
            });
        }
        let mut out = self.clone();
        out.start = a.values().to_vec();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialCluster {
    pub cluster_id: String,
    pub oy0: f64,
    pub oz0: f64,
    /// Relative ascertainment `c_i > 0`.
    pub c: f64,
    #[serde(default)]
    pub covariates: Vec<f64>,
}

/// Control-arm potential counts plus the effect model for a parallel design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    lambda: f64,
    clusters: Vec<PotentialCluster>,
}

impl PotentialTable {
    pub fn new(lambda: f64, mut clusters: Vec<PotentialCluster>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        if clusters.is_empty() {
            return Err(Error::InvalidInput("potential table has no clusters".into()));
        }
        let p = clusters[0].covariates.len();
        for c in &clusters {
            check_count(&c.cluster_id, "oy0", c.oy0)?;
            check_count(&c.cluster_id, "oz0", c.oz0)?;
            if !(c.c > 0.0 && c.c.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "cluster {}: relative ascertainment must be positive",
                    c.cluster_id
                )));
            }
            if c.covariates.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: c.covariates.len(),
                });
            }
        }
        clusters.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
        Ok(Self { lambda, clusters })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn clusters(&self) -> &[PotentialCluster] {
        &self.clusters
    }

    pub fn m(&self) -> usize {
        self.clusters.len()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.clusters.clone())
    }

    /// Potential `(O^Y(a), O^Z(a))` of cluster `i`.
    pub fn counts(&self, i: usize, treated: bool) -> (f64, f64) {
        let c = &self.clusters[i];
        if treated {
            (self.lambda * c.c * c.oy0, c.c * c.oz0)
        } else {
            (c.oy0, c.oz0)
        }
    }

    /// `L_i(0)` for every cluster.
    pub fn control_log_contrasts(&self) -> Result<Vec<f64>> {
        self.clusters
            .iter()
            .map(|c| log_contrast_counts(&c.cluster_id, c.oy0, c.oz0, false))
            .collect()
    }

    /// `U_i = O^Z_i(0) / O^Y_i(0)`.
    pub fn negative_positive_ratios(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.oz0 / c.oy0).collect()
    }

    /// Observed dataset under `assignment` (values 0/1).
    pub fn realize(&self, assignment: &Assignment) -> Result<ParallelData> {
        if assignment.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                found: assignment.len(),
            });
        }
        let records = self
            .clusters
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let treated = assignment.is_treated(i);
                let (y, z) = self.counts(i, treated);
                ClusterRecord {
                    cluster_id: c.cluster_id.clone(),
                    treated,
                    y_count: y,
                    z_count: z,
                    covariates: c.covariates.clone(),
                    dose: None,
                }
            })
            .collect();
        ParallelData::new(records)
    }
}

/// Stepped-wedge potential counts, one cell per cluster and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelPotentialTable {
    lambda: f64,
    periods: usize,
    cluster_ids: Vec<String>,
    oy0: Vec<f64>,
    oz0: Vec<f64>,
    c: Vec<f64>,
}

impl PanelPotentialTable {
    /// `oy0`, `oz0` and `c` are `m x T`, indexed `[cluster][period - 1]`.
    pub fn new(
        lambda: f64,
        cluster_ids: Vec<String>,
        oy0: Vec<Vec<f64>>,
        oz0: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        let m = cluster_ids.len();
        if m == 0 {
            return Err(Error::InvalidInput("potential table has no clusters".into()));
        }
        for rows in [&oy0, &oz0, &c] {
            if rows.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: rows.len(),
                });
            }
        }
        let periods = oy0[0].len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| cluster_ids[a].cmp(&cluster_ids[b]));
        let mut t = PanelPotentialTable {
            lambda,
            periods,
            cluster_ids: Vec::with_capacity(m),
            oy0: Vec::with_capacity(m * periods),
            oz0: Vec::with_capacity(m * periods),
            c: Vec::with_capacity(m * periods),
        };
        for &i in &order {
            for rows in [&oy0[i], &oz0[i], &c[i]] {
                if rows.len() != periods {
                    return Err(Error::DimensionMismatch {
                        expected: periods,
                        found: rows.len(),
                    });
                }
            }
            for k in 0..periods {
                check_count(&cluster_ids[i], "oy0", oy0[i][k])?;
                check_count(&cluster_ids[i], "oz0", oz0[i][k])?;
                if !(c[i][k] > 0.0 && c[i][k].is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "cluster {}: relative ascertainment must be positive",
                        cluster_ids[i]
                    )));
                }
            }
            t.cluster_ids.push(cluster_ids[i].clone());
            t.oy0.extend_from_slice(&oy0[i]);
            t.oz0.extend_from_slice(&oz0[i]);
            t.c.extend_from_slice(&c[i]);
        }
        Ok(t)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn m(&self) -> usize {
        self.cluster_ids.len()
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    fn idx(&self, i: usize, t: usize) -> usize {
        i * self.periods + t - 1
    }

    pub fn counts(&self, i: usize, t: usize, treated: bool) -> (f64, f64) {
        let k = self.idx(i, t);
        if treated {
            (self.lambda * self.c[k] * self.oy0[k], self.c[k] * self.oz0[k])
        } else {
            (self.oy0[k], self.oz0[k])
        }
    }

    /// `L_it(0)` as `[cluster][period - 1]`.
    pub fn control_log_contrasts(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.m())
            .map(|i| {
                (1..=self.periods)
                    .map(|t| {
                        let k = self.idx(i, t);
                        log_contrast_counts(&self.cluster_ids[i], self.oy0[k], self.oz0[k], false)
                    })
                    .collect()
            })
            .collect()
    }

    /// Observed panel when cluster `i` starts intervention at `assignment[i]`.
    pub fn realize(&self, assignment: &Assignment) -> Result<Panel> {
        if assignment.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                found: assignment.len(),
            });
        }
        let mut records = Vec::with_capacity(self.oy0.len());
        for (i, id) in self.cluster_ids.iter().enumerate() {
            for t in 1..=self.periods {
                let (y, z) = self.counts(i, t, assignment.treated_at(i, t));
                records.push(ClusterPeriodRecord {
                    cluster_id: id.clone(),
                    period: t,
                    start_period: assignment.values()[i],
                    y_count: y,
                    z_count: z,
                });
            }
        }
        Panel::from_records(&records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{AssignmentScheme, DEFAULT_ENUMERATION_CAP};

    fn rec(id: &str, y: f64, z: f64) -> ClusterRecord {
        ClusterRecord::new(id, false, y, z)
    }

    #[test]
    fn log_contrast_examples() {
        assert_eq!(log_contrast(&rec("a", 10.0, 10.0), false).unwrap(), 0.0);
        assert!((log_contrast(&rec("a", 20.0, 10.0), false).unwrap() - 0.693147).abs() < 1e-6);
        assert_eq!(
            log_contrast(&rec("a", 0.0, 10.0), false),
            Err(Error::ZeroCount {
                cluster_id: "a".into()
            })
        );
        let corrected = log_contrast(&rec("a", 0.0, 10.0), true).unwrap();
        assert!((corrected - (0.5f64.ln() - 10.5f64.ln())).abs() < 1e-15);
    }

    fn table(lambda: f64) -> PotentialTable {
        let clusters = [(10.0, 30.0, 0.8), (25.0, 40.0, 1.3), (7.0, 50.0, 0.2), (12.0, 12.0, 2.0)]
            .iter()
            .enumerate()
            .map(|(i, &(oy0, oz0, c))| PotentialCluster {
                cluster_id: format!("c{i}"),
                oy0,
                oz0,
                c,
                covariates: vec![i as f64],
            })
            .collect();
        PotentialTable::new(lambda, clusters).unwrap()
    }

    #[test]
    fn realize_selects_potential_counts() {
        let t = PotentialTable::new(
            0.5,
            vec![PotentialCluster {
                cluster_id: "a".into(),
                oy0: 10.0,
                oz0: 5.0,
                c: 0.8,
                covariates: vec![],
            }],
        )
        .unwrap();
        let d = t.realize(&Assignment(vec![1])).unwrap();
        assert!((d.records()[0].y_count - 4.0).abs() < 1e-15);
        assert!((d.records()[0].z_count - 4.0).abs() < 1e-15);
        assert!(t.realize(&Assignment(vec![1, 0])).is_err());
    }

    #[test]
    fn null_homogeneous_table_is_assignment_invariant() {
        let clusters: Vec<_> = table(1.0)
            .clusters()
            .iter()
            .cloned()
            .map(|mut c| {
                c.c = 1.0;
                c
            })
            .collect();
        let t = PotentialTable::new(1.0, clusters).unwrap();
        let scheme = AssignmentScheme::parallel(4, 2).unwrap();
        let counts = |d: &ParallelData| {
            d.records()
                .iter()
                .map(|r| (r.y_count, r.z_count))
                .collect::<Vec<_>>()
        };
        let first = counts(&t.realize(&scheme.base_assignment()).unwrap());
        for a in scheme.enumerate(DEFAULT_ENUMERATION_CAP).unwrap() {
            assert_eq!(counts(&t.realize(&a).unwrap()), first);
        }
    }

    #[test]
    fn treated_shift_is_log_lambda() {
        for lambda in [1.0, 0.6, 0.2, 3.7] {
            let t = table(lambda);
            let all_treated = t.realize(&Assignment(vec![1; 4])).unwrap();
            let all_control = t.realize(&Assignment(vec![0; 4])).unwrap();
            let l1 = all_treated.log_contrasts(false).unwrap();
            let l0 = all_control.log_contrasts(false).unwrap();
            for (a, b) in l1.iter().zip(&l0) {
                assert!((a - b - lambda.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn enumeration_mean_of_difference_is_log_lambda() {
        let t = table(0.6);
        let scheme = AssignmentScheme::parallel(4, 2).unwrap();
        let mut total = 0.0;
        let mut n = 0;
        for a in scheme.enumerate(DEFAULT_ENUMERATION_CAP).unwrap() {
            let d = t.realize(&a).unwrap();
            let l = d.log_contrasts(false).unwrap();
            let (mut s1, mut s0) = (0.0, 0.0);
            for (r, li) in d.records().iter().zip(&l) {
                if r.treated {
                    s1 += li;
                } else {
                    s0 += li;
                }
            }
            total += s1 / 2.0 - s0 / 2.0;
            n += 1;
        }
        assert_eq!(n, 6);
        assert!((total / 6.0 - 0.6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn panel_completeness_is_checked() {
        let mut records = Vec::new();
        for (i, s) in [(0, 1), (1, 2)] {
            for t in 1..=2 {
                records.push(ClusterPeriodRecord {
                    cluster_id: format!("k{i}"),
                    period: t,
                    start_period: s,
                    y_count: 3.0,
                    z_count: 4.0,
                });
            }
        }
        let p = Panel::from_records(&records).unwrap();
        assert_eq!(p.m(), 2);
        assert_eq!(p.periods(), 2);
        assert_eq!(p.to_records(), records);
        records.remove(3);
        assert_eq!(
            Panel::from_records(&records),
            Err(Error::IncompletePanel {
                cluster_id: "k1".into(),
                period: 2
            })
        );
    }

    #[test]
    fn panel_realize_uses_inclusive_start() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let ones = vec![vec![1.0; 3]; 2];
        let t = PanelPotentialTable::new(
            0.5,
            ids,
            vec![vec![10.0; 3]; 2],
            vec![vec![20.0; 3]; 2],
            ones,
        )
        .unwrap();
        let p = t.realize(&Assignment(vec![2, 3])).unwrap();
        assert_eq!(p.y_count(0, 1), 10.0);
        assert_eq!(p.y_count(0, 2), 5.0);
        assert_eq!(p.y_count(1, 2), 10.0);
        assert_eq!(p.y_count(1, 3), 5.0);
    }
}
