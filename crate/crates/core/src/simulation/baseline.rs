//! Baseline counts for the simulation designs.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};

const PARALLEL_CSV: &str = include_str!("../../data/baseline_parallel.csv");
const STEPPED_WEDGE_CSV: &str = include_str!("../../data/baseline_sw.csv");

/// Per-cluster baseline: test-positives, test-negatives, covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelBaseline {
    pub ids: Vec<String>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// `[cluster][covariate]`; the first covariate drives the coupling.
    pub x: Vec<Vec<f64>>,
}

/// Per-cluster-period test-positives plus the derived test-negatives
/// `Z_i n_t / n_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteppedWedgeBaseline {
    pub ids: Vec<String>,
    /// `[cluster][period - 1]`.
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct ParallelRow {
    cluster_id: String,
    y_count: f64,
    z_count: f64,
    population: f64,
}

#[derive(Deserialize)]
struct PeriodRow {
    cluster_id: String,
    period: usize,
    y_count: f64,
}

fn rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(k, r)| {
            r.map_err(|e| Error::Parse {
                line: k as u64 + 2,
                column: String::new(),
                reason: e.to_string(),
            })
        })
        .collect()
}

fn positive(id: &str, what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidScenario(format!(
            "baseline {what} for cluster {id} must be positive, got {v}"
        )))
    }
}

impl ParallelBaseline {
    pub fn builtin() -> Self {
        Self::from_csv(PARALLEL_CSV).expect("shipped baseline is valid")
    }

    /// Columns `cluster_id, y_count, z_count, population`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<ParallelRow> = rows(text)?;
        let mut out = ParallelBaseline {
            ids: Vec::new(),
            y: Vec::new(),
            z: Vec::new(),
            x: Vec::new(),
        };
        for r in rows {
            positive(&r.cluster_id, "y_count", r.y_count)?;
            positive(&r.cluster_id, "z_count", r.z_count)?;
            positive(&r.cluster_id, "population", r.population)?;
            out.ids.push(r.cluster_id);
            out.y.push(r.y_count);
            out.z.push(r.z_count);
            out.x.push(vec![r.population]);
        }
        if out.ids.is_empty() {
            return Err(Error::InvalidScenario("baseline has no clusters".into()));
        }
        Ok(out)
    }

    pub fn m(&self) -> usize {
        self.ids.len()
    }
}

impl SteppedWedgeBaseline {
    pub fn builtin() -> Self {
        Self::from_csv(STEPPED_WEDGE_CSV, &ParallelBaseline::builtin())
            .expect("shipped baseline is valid")
    }

    /// Columns `cluster_id, period, y_count`; test-negatives come from the
    /// parallel baseline of the same clusters, scaled by `n_t / n_T`.
    pub fn from_csv(text: &str, parallel: &ParallelBaseline) -> Result<Self> {
        let rows: Vec<PeriodRow> = rows(text)?;
        let mut cells: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
        for r in rows {
            positive(&r.cluster_id, "y_count", r.y_count)?;
            if cells
                .entry(r.cluster_id.clone())
                .or_default()
                .insert(r.period, r.y_count)
                .is_some()
            {
                return Err(Error::InvalidScenario(format!(
                    "duplicate baseline cell ({}, {})",
                    r.cluster_id, r.period
                )));
            }
        }
        let periods = cells.values().flat_map(|c| c.keys()).copied().max().unwrap_or(0);
        let mut ids = Vec::new();
        let mut y = Vec::new();
        let mut z_i = Vec::new();
        for (id, by_period) in &cells {
            let row: Vec<f64> = (1..=periods)
                .map(|t| {
                    by_period.get(&t).copied().ok_or_else(|| Error::IncompletePanel {
                        cluster_id: id.clone(),
                        period: t,
                    })
                })
                .collect::<Result<_>>()?;
            let k = parallel.ids.iter().position(|p| p == id).ok_or_else(|| {
                Error::InvalidScenario(format!("cluster {id} missing from the parallel baseline"))
            })?;
            ids.push(id.clone());
            y.push(row);
            z_i.push(parallel.z[k]);
        }
        if ids.is_empty() || periods < 2 {
            return Err(Error::InvalidScenario(
                "stepped-wedge baseline needs clusters and at least two periods".into(),
            ));
        }
        let n: Vec<f64> = (0..periods).map(|t| y.iter().map(|r| r[t]).sum()).collect();
        let last = n[periods - 1];
        let z = z_i
            .iter()
            .map(|zi| n.iter().map(|nt| zi * nt / last).collect())
            .collect();
        Ok(SteppedWedgeBaseline { ids, y, z })
    }

    pub fn m(&self) -> usize {
        self.ids.len()
    }

    pub fn periods(&self) -> usize {
        self.y[0].len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_tables() {
        let p = ParallelBaseline::builtin();
        assert_eq!(p.m(), 24);
        let sw = SteppedWedgeBaseline::builtin();
        assert_eq!(sw.m(), 24);
        assert_eq!(sw.periods(), 9);
        // at the last period the scaling is the identity
        for i in 0..24 {
            assert!((sw.z[i][8] - p.z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_totals_give_identity_scaling() {
        let p = ParallelBaseline::from_csv(
            "cluster_id,y_count,z_count,population\na,10,20,1.0\nb,30,40,2.0\n",
        )
        .unwrap();
        let sw = SteppedWedgeBaseline::from_csv(
            "cluster_id,period,y_count\na,1,10\na,2,15\nb,1,30\nb,2,25\n",
            &p,
        )
        .unwrap();
        assert_eq!(sw.z, vec![vec![20.0, 20.0], vec![40.0, 40.0]]);
    }

    #[test]
    fn incomplete_baseline() {
        let p = ParallelBaseline::builtin();
        let e = SteppedWedgeBaseline::from_csv("cluster_id,period,y_count\nC01,1,3\nC01,3,4\n", &p);
        assert!(matches!(e, Err(Error::IncompletePanel { period: 2, .. })));
    }
}
