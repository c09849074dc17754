//! Simulation harness: data-generating processes for parallel and
//! stepped-wedge designs and the bias / SE / ASE / PoR / CP metrics.

mod baseline;
mod dgp;
mod evaluate;
mod scenario;
mod sweep;

pub use baseline::{ParallelBaseline, SteppedWedgeBaseline};
pub use dgp::{ParallelGenerator, ParallelReplicate, SteppedWedgeGenerator, SteppedWedgeReplicate};
pub use evaluate::{
    evaluate, Baselines, Evaluation, MetricsRow, Outcome, ReplicateRecord, SimEstimator,
};
pub use scenario::{
    Ascertainment, AscertainmentLaw, AscertainmentOrder, BaselineSource, DoseModel, DrawPolicy,
    SimScenario,
};
pub use sweep::{replicate_ascertainment_sweep, Quantiles, SweepResult, SweepRow, SweepSummary};

use crate::error::Result;

/// All replicates of a parallel scenario, in index order; degenerate
/// replicates are skipped.
pub fn simulate_parallel(
    scenario: &SimScenario,
    baseline: &ParallelBaseline,
) -> Result<Vec<ParallelReplicate>> {
    let g = ParallelGenerator::new(scenario, baseline)?;
    let mut out = Vec::with_capacity(scenario.n_replicates);
    for r in 0..scenario.n_replicates {
        if let Some(rep) = g.replicate(r)? {
            out.push(rep);
        }
    }
    Ok(out)
}

/// All replicates of a stepped-wedge scenario, in index order.
pub fn simulate_stepped_wedge(
    scenario: &SimScenario,
    baseline: &SteppedWedgeBaseline,
) -> Result<Vec<SteppedWedgeReplicate>> {
    let g = SteppedWedgeGenerator::new(scenario, baseline)?;
    let mut out = Vec::with_capacity(scenario.n_replicates);
    for r in 0..scenario.n_replicates {
        if let Some(rep) = g.replicate(r)? {
            out.push(rep);
        }
    }
    Ok(out)
}
