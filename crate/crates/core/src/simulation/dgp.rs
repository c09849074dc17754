//! Replicate generation.
//!
//! Replicate `r` draws everything from the stream `(seed, REPLICATE, r)`
//! (counts, then the assignment) and, for dose models, `(seed, DOSE, r)`.
//! Study-level ascertainment comes from `(seed, ASCERTAINMENT)`; per
//! replicate draws use `(seed, ASCERTAINMENT, r)`.

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution};

use super::baseline::{ParallelBaseline, SteppedWedgeBaseline};
use super::scenario::{AscertainmentLaw, AscertainmentOrder, DrawPolicy, SimScenario};
use crate::assignment::AssignmentScheme;
use crate::error::{Error, Result};
use crate::model::{
    ClusterRecord, Panel, PanelPotentialTable, ParallelData, PotentialCluster, PotentialTable,
};
use crate::rng::{self, domain, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelReplicate {
    pub index: usize,
    pub table: PotentialTable,
    pub data: ParallelData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteppedWedgeReplicate {
    pub index: usize,
    pub table: PanelPotentialTable,
    pub panel: Panel,
}

fn draw_c<R: Rng + ?Sized>(law: AscertainmentLaw, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    match law {
        AscertainmentLaw::Constant { value } => Ok(vec![value; n]),
        AscertainmentLaw::Beta { a, b } => {
            let beta = Beta::new(a, b).map_err(|e| Error::InvalidScenario(e.to_string()))?;
            Ok((0..n)
                .map(|_| beta.sample(rng).max(f64::MIN_POSITIVE))
                .collect())
        }
    }
}

/// Reorders `c` so that it increases with `key`.
fn couple(mut c: Vec<f64>, key: &[f64]) -> Vec<f64> {
    c.sort_by(f64::total_cmp);
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[a].total_cmp(&key[b]));
    let mut out = vec![0.0; c.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = c[rank];
    }
    out
}

/// Multinomial draw by sequential conditional binomials. Cells that come
/// out zero are re-drawn from their marginal binomial up to `max_redraws`
/// times; `None` if a zero survives.
fn multinomial<R: Rng + ?Sized>(
    rng: &mut R,
    n: u64,
    weights: &[f64],
    max_redraws: usize,
) -> Result<Option<Vec<f64>>> {
    let total: f64 = weights.iter().sum();
    let binomial = |n: u64, p: f64| {
        Binomial::new(n, p.clamp(0.0, 1.0)).map_err(|e| Error::InvalidScenario(e.to_string()))
    };
    let mut out = Vec::with_capacity(weights.len());
    let (mut left_n, mut left_w) = (n, total);
    for (k, &w) in weights.iter().enumerate() {
        let x = if k + 1 == weights.len() || left_w <= 0.0 {
            left_n
        } else {
            binomial(left_n, w / left_w)?.sample(rng)
        };
        left_n -= x;
        left_w -= w;
        out.push(x);
    }
    for (k, x) in out.iter_mut().enumerate() {
        let mut attempts = 0;
        while *x == 0 {
            if attempts == max_redraws {
                return Ok(None);
            }
            *x = binomial(n, weights[k] / total)?.sample(rng);
            attempts += 1;
        }
    }
    Ok(Some(out.into_iter().map(|x| x as f64).collect()))
}

fn total(v: &[f64]) -> u64 {
    v.iter().sum::<f64>().round() as u64
}

/// Draws replicates of a parallel scenario.
#[derive(Debug, Clone)]
pub struct ParallelGenerator {
    scenario: SimScenario,
    baseline: ParallelBaseline,
    scheme: AssignmentScheme,
    study_c: Option<Vec<f64>>,
}

impl ParallelGenerator {
    pub fn new(scenario: &SimScenario, baseline: &ParallelBaseline) -> Result<Self> {
        scenario.validate()?;
        let scheme = scenario.design.clone();
        let AssignmentScheme::Parallel { m, .. } = scheme else {
            return Err(Error::InvalidScenario("expected a parallel design".into()));
        };
        if m != baseline.m() {
            return Err(Error::InvalidScenario(format!(
                "design has {m} clusters but the baseline has {}",
                baseline.m()
            )));
        }
        if scenario.covariate_coupling && baseline.x.iter().any(|x| x.is_empty()) {
            return Err(Error::InvalidScenario(
                "covariate coupling needs a covariate".into(),
            ));
        }
        let mut g = ParallelGenerator {
            scenario: scenario.clone(),
            baseline: baseline.clone(),
            scheme,
            study_c: None,
        };
        if scenario.ascertainment.draw_policy == DrawPolicy::OncePerStudy {
            let mut rng = rng::stream(scenario.seed, &[domain::ASCERTAINMENT]);
            g.study_c = Some(g.draw_ascertainment(&mut rng)?);
        }
        Ok(g)
    }

    fn draw_ascertainment(&self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let c = draw_c(self.scenario.ascertainment.law, self.baseline.m(), rng)?;
        Ok(match self.scenario.ascertainment.order {
            AscertainmentOrder::Independent => c,
            AscertainmentOrder::CoupledToContrast => {
                let key: Vec<f64> = self
                    .baseline
                    .y
                    .iter()
                    .zip(&self.baseline.z)
                    .map(|(y, z)| y / z)
                    .collect();
                couple(c, &key)
            }
        })
    }

    /// Study-level ascertainment, if drawn once per study.
    pub fn study_ascertainment(&self) -> Option<&[f64]> {
        self.study_c.as_deref()
    }

    /// Replicate `r`; `None` when it is degenerate.
    pub fn replicate(&self, r: usize) -> Result<Option<ParallelReplicate>> {
        let s = &self.scenario;
        let b = &self.baseline;
        let mut rng = rng::stream(s.seed, &[domain::REPLICATE, r as u64]);
        let Some(mut oy0) = multinomial(&mut rng, total(&b.y), &b.y, s.max_redraws)? else {
            return Ok(None);
        };
        let Some(mut oz0) = multinomial(&mut rng, total(&b.z), &b.z, s.max_redraws)? else {
            return Ok(None);
        };
        if s.covariate_coupling {
            for i in 0..b.m() {
                oy0[i] *= 2.0 * b.x[i][0];
                oz0[i] /= 2.0 * b.x[i][0];
            }
        }
        let c = match &self.study_c {
            Some(c) => c.clone(),
            None => {
                let mut crng = rng::stream(s.seed, &[domain::ASCERTAINMENT, r as u64]);
                self.draw_ascertainment(&mut crng)?
            }
        };
        let lambda = if s.dose.is_some() { 1.0 } else { s.lambda };
        let clusters = (0..b.m())
            .map(|i| PotentialCluster {
                cluster_id: b.ids[i].clone(),
                oy0: oy0[i],
                oz0: oz0[i],
                c: c[i],
                covariates: b.x[i].clone(),
            })
            .collect();
        let table = PotentialTable::new(lambda, clusters)?;
        let a = self.scheme.sample(&mut rng);
        let mut data = table.realize(&a)?;
        if let Some(dose) = &s.dose {
            let mut drng = rng::stream(s.seed, &[domain::DOSE, r as u64]);
            let records = data
                .records()
                .iter()
                .map(|rec| {
                    let (lo, hi) = if rec.treated {
                        dose.treated_range
                    } else {
                        dose.control_range
                    };
                    let d = if hi > lo { drng.random_range(lo..hi) } else { lo };
                    ClusterRecord {
                        y_count: rec.y_count * (dose.beta * d).exp(),
                        dose: Some(d),
                        ..rec.clone()
                    }
                })
                .collect();
            data = ParallelData::new(records)?;
        }
        Ok(Some(ParallelReplicate {
            index: r,
            table,
            data,
        }))
    }
}

/// Draws replicates of a stepped-wedge scenario.
#[derive(Debug, Clone)]
pub struct SteppedWedgeGenerator {
    scenario: SimScenario,
    baseline: SteppedWedgeBaseline,
    scheme: AssignmentScheme,
    study_c: Option<Vec<Vec<f64>>>,
}

impl SteppedWedgeGenerator {
    pub fn new(scenario: &SimScenario, baseline: &SteppedWedgeBaseline) -> Result<Self> {
        scenario.validate()?;
        let scheme = scenario.design.clone();
        let AssignmentScheme::SteppedWedge { q } = &scheme else {
            return Err(Error::InvalidScenario("expected a stepped-wedge design".into()));
        };
        if scheme.m() != baseline.m() || q.len() != baseline.periods() {
            return Err(Error::InvalidScenario(format!(
                "design is {} clusters x {} periods but the baseline is {} x {}",
                scheme.m(),
                q.len(),
                baseline.m(),
                baseline.periods()
            )));
        }
        let mut g = SteppedWedgeGenerator {
            scenario: scenario.clone(),
            baseline: baseline.clone(),
            scheme,
            study_c: None,
        };
        if scenario.ascertainment.draw_policy == DrawPolicy::OncePerStudy {
            let mut rng = rng::stream(scenario.seed, &[domain::ASCERTAINMENT]);
            g.study_c = Some(g.draw_ascertainment(&mut rng)?);
        }
        Ok(g)
    }

    fn draw_ascertainment(&self, rng: &mut StreamRng) -> Result<Vec<Vec<f64>>> {
        let (m, periods) = (self.baseline.m(), self.baseline.periods());
        let flat = draw_c(self.scenario.ascertainment.law, m * periods, rng)?;
        let mut c: Vec<Vec<f64>> = flat.chunks(periods).map(<[f64]>::to_vec).collect();
        if self.scenario.ascertainment.order == AscertainmentOrder::CoupledToContrast {
            for t in 0..periods {
                let col: Vec<f64> = c.iter().map(|row| row[t]).collect();
                let key: Vec<f64> = (0..m)
                    .map(|i| self.baseline.y[i][t] / self.baseline.z[i][t])
                    .collect();
                for (row, v) in c.iter_mut().zip(couple(col, &key)) {
                    row[t] = v;
                }
            }
        }
        Ok(c)
    }

    pub fn replicate(&self, r: usize) -> Result<Option<SteppedWedgeReplicate>> {
        let s = &self.scenario;
        let b = &self.baseline;
        let (m, periods) = (b.m(), b.periods());
        let mut rng = rng::stream(s.seed, &[domain::REPLICATE, r as u64]);
        let mut oy0 = vec![vec![0.0; periods]; m];
        let mut oz0 = vec![vec![0.0; periods]; m];
        for t in 0..periods {
            let wy: Vec<f64> = (0..m).map(|i| b.y[i][t]).collect();
            let wz: Vec<f64> = (0..m).map(|i| b.z[i][t]).collect();
            let Some(y) = multinomial(&mut rng, total(&wy), &wy, s.max_redraws)? else {
                return Ok(None);
            };
            let Some(z) = multinomial(&mut rng, total(&wz), &wz, s.max_redraws)? else {
                return Ok(None);
            };
            for i in 0..m {
                oy0[i][t] = y[i];
                oz0[i][t] = z[i];
            }
        }
        let c = match &self.study_c {
            Some(c) => c.clone(),
            None => {
                let mut crng = rng::stream(s.seed, &[domain::ASCERTAINMENT, r as u64]);
                self.draw_ascertainment(&mut crng)?
            }
        };
        let table = PanelPotentialTable::new(s.lambda, b.ids.clone(), oy0, oz0, c)?;
        let a = self.scheme.sample(&mut rng);
        let panel = table.realize(&a)?;
        Ok(Some(SteppedWedgeReplicate {
            index: r,
            table,
            panel,
        }))
    }

    pub fn scheme(&self) -> &AssignmentScheme {
        &self.scheme
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::scenario::{Ascertainment, AscertainmentLaw};

    #[test]
    fn multinomial_moments() {
        let mut rng = rng::stream(3, &[]);
        let w = vec![1.0; 24];
        let n = 20_000;
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| multinomial(&mut rng, 2400, &w, 100).unwrap().unwrap())
            .collect();
        for k in [0, 11, 23] {
            let col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            let mean = crate::stats::mean(&col);
            let sd = crate::stats::sample_variance(&col).sqrt();
            assert!((mean - 100.0).abs() < 0.3, "mean {mean}");
            assert!((sd - 9.79).abs() < 0.2, "sd {sd}");
        }
        assert!(draws.iter().all(|d| d.iter().sum::<f64>() == 2400.0));
    }

    #[test]
    fn zero_cells_are_redrawn_or_flagged() {
        let mut rng = rng::stream(4, &[]);
        let w = [1000.0, 1e-9];
        assert!(multinomial(&mut rng, 1000, &w, 5).unwrap().is_none());
        let w = [5.0, 1.0];
        for _ in 0..200 {
            let d = multinomial(&mut rng, 6, &w, 100).unwrap().unwrap();
            assert!(d.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn coupling_orders_by_key() {
        let c = couple(vec![0.9, 0.1, 0.5], &[2.0, 3.0, 1.0]);
        assert_eq!(c, vec![0.5, 0.9, 0.1]);
    }

    #[test]
    fn null_homogeneous_scenario_has_identical_arms() {
        let mut s = SimScenario::default_parallel();
        s.covariate_coupling = false;
        s.ascertainment = Ascertainment {
            law: AscertainmentLaw::Constant { value: 1.0 },
            ..Default::default()
        };
        let g = ParallelGenerator::new(&s, &ParallelBaseline::builtin()).unwrap();
        let r = g.replicate(0).unwrap().unwrap();
        for i in 0..24 {
            assert_eq!(r.table.counts(i, true), r.table.counts(i, false));
        }
    }

    #[test]
    fn replicates_are_addressed() {
        let s = SimScenario::default_parallel();
        let g = ParallelGenerator::new(&s, &ParallelBaseline::builtin()).unwrap();
        let a = g.replicate(17).unwrap();
        let _ = g.replicate(3).unwrap();
        assert_eq!(g.replicate(17).unwrap(), a);
        assert_ne!(g.replicate(18).unwrap(), a);
    }

    #[test]
    fn stepped_wedge_replicate() {
        let s = SimScenario::default_stepped_wedge();
        let g = SteppedWedgeGenerator::new(&s, &SteppedWedgeBaseline::builtin()).unwrap();
        let r = g.replicate(0).unwrap().unwrap();
        assert_eq!(r.panel.m(), 24);
        assert_eq!(r.panel.periods(), 9);
        assert_eq!(r.panel.start_counts(), vec![0, 3, 3, 3, 3, 3, 3, 3, 3]);
    }
}
