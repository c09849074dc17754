use std::path::Path;

use serde::Serialize;

use crate::output::{self, EstimateRow};
use crate::{
    AnalyzeArgs, AnalyzeSwArgs, CiMethodArg, DoseArgs, EstimatorArg, Failure, ModeArg,
    PermutationArgs, ScenarioArgs, SearchArg, SigmaArg, SimEstimatorArg, SimulateArgs, SweepArgs,
    WeightsArg,
};
use crtnd_core::analysis::{analyze_parallel, AnalyzeOptions, IntervalMethod, ModeChoice, AUTO_EXACT_LIMIT};
use crtnd_core::inference::{
    dose_response_estimate, DoseInference, DoseOptions, NullAdjustment, PermutationMode,
    SearchMethod, Statistic, DEFAULT_GRID_POINTS,
};
use crtnd_core::io::{self, Dataset};
use crtnd_core::simulation::{
    evaluate, replicate_ascertainment_sweep, Baselines, SimEstimator, SimScenario,
};
use crtnd_core::stepped_wedge::{
    optimal_weights, sw_covariance_estimate, sw_log_contrast, sw_permutation_test,
    SigmaConvention, SwOptions, WeightChoice, WeightKind,
};
use crtnd_core::{AnalysisOptions, AssignmentScheme, Method, Panel, ParallelData};

fn check_alpha(alpha: f64) -> Result<(), Failure> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(Failure::validation(format!("--alpha must be in (0, 0.5), got {alpha}")))
    }
}

fn check_output_dirs(out: &crate::OutputArgs) -> Result<(), Failure> {
    for p in [&out.output, &out.csv].into_iter().flatten() {
        check_parent(p)?;
    }
    Ok(())
}

fn check_parent(p: &Path) -> Result<(), Failure> {
    match p.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Failure::validation(
            format!("output directory {} does not exist", dir.display()),
        )),
        _ => Ok(()),
    }
}

fn parallel_input(path: &Path) -> Result<ParallelData, Failure> {
    match io::parse_dataset(path)? {
        Dataset::Parallel(d) => Ok(d),
        Dataset::SteppedWedge(_) => Err(Failure::validation(
            "input has a period column; use analyze-sw for stepped-wedge data",
        )),
    }
}

fn panel_input(path: &Path) -> Result<Panel, Failure> {
    match io::parse_dataset(path)? {
        Dataset::SteppedWedge(p) => Ok(p),
        Dataset::Parallel(_) => Err(Failure::validation(
            "stepped-wedge input needs the columns cluster_id, period, start_period, y_count, z_count",
        )),
    }
}

fn mode_choice(p: &PermutationArgs) -> Result<ModeChoice, Failure> {
    if p.n_draws == 0 {
        return Err(Failure::validation("--n-draws must be positive"));
    }
    Ok(match p.mode {
        ModeArg::Auto => ModeChoice::Auto {
            n_draws: p.n_draws,
            seed: p.seed,
        },
        ModeArg::Exact => ModeChoice::Exact { cap: p.cap },
        ModeArg::MonteCarlo => ModeChoice::MonteCarlo {
            n_draws: p.n_draws,
            seed: p.seed,
        },
    })
}

fn search(s: SearchArg) -> SearchMethod {
    match s {
        SearchArg::Grid => SearchMethod::Grid {
            points: DEFAULT_GRID_POINTS,
        },
        SearchArg::Bisection => SearchMethod::bisection(),
    }
}

fn method(e: EstimatorArg) -> Method {
    match e {
        EstimatorArg::OddsRatio => Method::OddsRatio,
        EstimatorArg::Tpf => Method::Tpf,
        EstimatorArg::LogContrast => Method::LogContrast,
        EstimatorArg::CovariateAdjusted => Method::CovariateAdjusted,
    }
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    check_alpha(args.alpha)?;
    check_output_dirs(&args.out)?;
    let data = parallel_input(&args.input)?;
    let estimators = if args.estimators.is_empty() {
        AnalyzeOptions::default_estimators(&data)
    } else {
        args.estimators.iter().map(|&e| method(e)).collect()
    };
    let opts = AnalyzeOptions {
        estimators,
        analysis: AnalysisOptions {
            alpha: args.alpha,
            continuity_correction: args.continuity_correction,
        },
        interval: match args.ci_method {
            CiMethodArg::Normal => IntervalMethod::Normal,
            CiMethodArg::InvertNormal => IntervalMethod::InvertNormal,
            CiMethodArg::InvertPermutation => IntervalMethod::InvertPermutation,
        },
        mode: mode_choice(&args.permutation)?,
        search: search(args.search),
    };
    let reports = analyze_parallel(&data, &opts)?;
    if let Some(path) = &args.out.csv {
        let rows: Vec<EstimateRow> = reports.iter().map(EstimateRow::from).collect();
        output::write_csv(path, &rows)?;
    }
    #[derive(Serialize)]
    struct Config<'a> {
        args: &'a AnalyzeArgs,
        resolved: &'a AnalyzeOptions,
    }
    output::emit(
        "analyze",
        &Config {
            args,
            resolved: &opts,
        },
        &serde_json::json!({ "m": data.m(), "m1": data.m1(), "reports": reports }),
        args.out.output.as_deref(),
        || output::estimate_table(&reports),
    )
}

fn read_weights(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = io::read(path)?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|_| {
                Failure::validation(format!("{}: '{s}' is not a number", path.display()))
            })
        })
        .collect()
}

fn sw_mode(panel: &Panel, choice: ModeChoice) -> Result<PermutationMode, Failure> {
    let scheme = AssignmentScheme::stepped_wedge(panel.start_counts())?;
    Ok(match choice {
        ModeChoice::Exact { cap } => PermutationMode::Exact { cap },
        ModeChoice::MonteCarlo { n_draws, seed } => PermutationMode::MonteCarlo { n_draws, seed },
        ModeChoice::Auto { n_draws, seed } => match scheme.total_assignments() {
            Some(t) if t <= AUTO_EXACT_LIMIT => PermutationMode::Exact {
                cap: AUTO_EXACT_LIMIT as u64,
            },
            _ => PermutationMode::MonteCarlo { n_draws, seed },
        },
    })
}

pub fn analyze_sw(args: &AnalyzeSwArgs) -> Result<(), Failure> {
    check_alpha(args.alpha)?;
    check_output_dirs(&args.out)?;
    let panel = panel_input(&args.input)?;
    let convention = match args.sigma_convention {
        SigmaArg::Canonical => SigmaConvention::Canonical,
        SigmaArg::Printed => SigmaConvention::Printed,
    };
    let opts = AnalysisOptions {
        alpha: args.alpha,
        continuity_correction: args.continuity_correction,
    };
    let weights = match (args.weights, &args.weights_file) {
        (WeightsArg::File, Some(p)) => WeightChoice::Supplied(read_weights(p)?),
        (WeightsArg::File, None) => {
            return Err(Failure::validation("--weights file needs --weights-file"))
        }
        (_, Some(_)) => {
            return Err(Failure::validation("--weights-file is only used with --weights file"))
        }
        (WeightsArg::Equal, None) => WeightChoice::Equal,
        (WeightsArg::Optimal, None) => WeightChoice::Optimal,
    };
    let sw = SwOptions {
        weights,
        convention,
        ..SwOptions::default()
    };
    let mut report = sw_log_contrast(&panel, &sw, &opts)?;
    if matches!(sw.weights, WeightChoice::Optimal) {
        // surface the fallback decision explicitly
        let sigma = sw_covariance_estimate(&panel, args.continuity_correction, convention)?;
        let fell_back = optimal_weights(&sigma, WeightKind::OptimalPlugin, sw.condition_limit).is_err();
        report.diagnose("optimal_weights_fallback", fell_back);
    }
    if args.permutation_test {
        let w: Vec<f64> = report
            .diagnostics
            .get("weights")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_default();
        let mode = sw_mode(&panel, mode_choice(&args.permutation)?)?;
        let perm = sw_permutation_test(&panel, 1.0, &w, mode, args.continuity_correction)?;
        report.diagnose("permutation_p_value", perm.p_two_sided);
        report.diagnose("permutation_mode", serde_json::to_value(mode).unwrap_or_default());
    }
    let reports = vec![report];
    if let Some(path) = &args.out.csv {
        let rows: Vec<EstimateRow> = reports.iter().map(EstimateRow::from).collect();
        output::write_csv(path, &rows)?;
    }
    output::emit(
        "analyze-sw",
        args,
        &serde_json::json!({
            "m": panel.m(),
            "periods": panel.periods(),
            "start_counts": panel.start_counts(),
            "reports": reports,
        }),
        args.out.output.as_deref(),
        || output::estimate_table(&reports),
    )
}

pub fn dose_response(args: &DoseArgs) -> Result<(), Failure> {
    check_alpha(args.alpha)?;
    check_output_dirs(&args.out)?;
    let data = parallel_input(&args.input)?;
    if !data.has_doses() {
        return Err(Failure::validation("dose-response needs a dose column"));
    }
    let adjustment = if args.adjust_covariates {
        NullAdjustment::Covariates
    } else {
        NullAdjustment::None
    };
    let inference = match args.ci_method {
        CiMethodArg::Normal | CiMethodArg::InvertNormal => DoseInference::Normal,
        CiMethodArg::InvertPermutation => DoseInference::Permutation {
            mode: mode_choice(&args.permutation)?.resolve(
                &data,
                Statistic::Contrast,
                args.adjust_covariates,
            ),
        },
    };
    let dose = DoseOptions {
        inference,
        adjustment,
        search: search(args.search),
    };
    let opts = AnalysisOptions {
        alpha: args.alpha,
        continuity_correction: args.continuity_correction,
    };
    let reports = vec![dose_response_estimate(&data, &opts, &dose)?];
    if let Some(path) = &args.out.csv {
        let rows: Vec<EstimateRow> = reports.iter().map(EstimateRow::from).collect();
        output::write_csv(path, &rows)?;
    }
    #[derive(Serialize)]
    struct Config<'a> {
        args: &'a DoseArgs,
        resolved: &'a DoseOptions,
    }
    output::emit(
        "dose-response",
        &Config {
            args,
            resolved: &dose,
        },
        &serde_json::json!({ "m": data.m(), "m1": data.m1(), "reports": reports }),
        args.out.output.as_deref(),
        || output::estimate_table(&reports),
    )
}

fn sim_estimator(e: SimEstimatorArg) -> SimEstimator {
    match e {
        SimEstimatorArg::OddsRatio => SimEstimator::OddsRatio,
        SimEstimatorArg::Tpf => SimEstimator::TestPositiveFraction,
        SimEstimatorArg::LogContrast => SimEstimator::LogContrast,
        SimEstimatorArg::CovariateAdjusted => SimEstimator::CovariateAdjusted,
        SimEstimatorArg::LogContrastPermutation => SimEstimator::LogContrastPermutation,
        SimEstimatorArg::DoseResponse => SimEstimator::DoseResponse,
        SimEstimatorArg::SwEqual => SimEstimator::SwEqual,
        SimEstimatorArg::SwOptimal => SimEstimator::SwOptimal,
    }
}

/// Scenario with command-line overrides applied, and its baselines.
fn load_scenario(
    args: &ScenarioArgs,
    default: SimScenario,
) -> Result<(SimScenario, Baselines), Failure> {
    let (mut s, base_dir) = match &args.scenario {
        Some(path) => (
            SimScenario::from_toml(&io::read(path)?)?,
            path.parent().map(Path::to_path_buf),
        ),
        None => (default, None),
    };
    if let Some(l) = args.lambda {
        s.lambda = l;
    }
    if let Some(n) = args.replicates {
        s.n_replicates = n;
    }
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(a) = args.alpha {
        check_alpha(a)?;
        s.alpha = a;
    }
    s.validate()?;
    let baselines = Baselines::load(&s.baseline, base_dir.as_deref())?;
    Ok((s, baselines))
}

fn estimators(args: &ScenarioArgs, s: &SimScenario) -> Vec<SimEstimator> {
    if args.estimators.is_empty() {
        SimEstimator::defaults_for(s)
    } else {
        args.estimators.iter().map(|&e| sim_estimator(e)).collect()
    }
}

#[derive(Serialize)]
struct RawRow {
    replicate: usize,
    estimator: &'static str,
    estimate: Option<f64>,
    se: Option<f64>,
    reject: Option<bool>,
    covers: Option<bool>,
}

#[derive(Serialize)]
struct SimConfig<'a, A: Serialize> {
    args: &'a A,
    scenario: &'a SimScenario,
    estimators: &'a [SimEstimator],
}

pub fn simulate(args: &SimulateArgs, stepped_wedge: bool) -> Result<(), Failure> {
    check_output_dirs(&args.out)?;
    if let Some(p) = &args.raw {
        check_parent(p)?;
    }
    let default = match (stepped_wedge, args.dose) {
        (true, true) => return Err(Failure::validation("--dose applies to simulate only")),
        (true, false) => SimScenario::default_stepped_wedge(),
        (false, true) => SimScenario::default_dose_response(),
        (false, false) => SimScenario::default_parallel(),
    };
    if args.dose && args.scenario.scenario.is_some() {
        return Err(Failure::validation("--dose and --scenario are mutually exclusive"));
    }
    let (scenario, baselines) = load_scenario(&args.scenario, default)?;
    if scenario.is_stepped_wedge() != stepped_wedge {
        return Err(Failure::validation(if stepped_wedge {
            "simulate-sw needs a stepped-wedge scenario"
        } else {
            "stepped-wedge scenarios run with simulate-sw"
        }));
    }
    let est = estimators(&args.scenario, &scenario);
    let eval = evaluate(&scenario, &baselines, &est, args.raw.is_some())?;
    if let Some(path) = &args.out.csv {
        output::write_csv(path, &eval.rows)?;
    }
    if let (Some(path), Some(raw)) = (&args.raw, &eval.raw) {
        let rows: Vec<RawRow> = raw
            .iter()
            .map(|r| RawRow {
                replicate: r.replicate,
                estimator: r.estimator.name(),
                estimate: r.outcome.map(|o| o.estimate),
                se: r.outcome.and_then(|o| o.se),
                reject: r.outcome.map(|o| o.reject),
                covers: r.outcome.map(|o| o.covers),
            })
            .collect();
        output::write_csv(path, &rows)?;
    }
    let command = if stepped_wedge { "simulate-sw" } else { "simulate" };
    let summary = serde_json::json!({
        "scenario_id": eval.scenario_id,
        "n_replicates": eval.n_replicates,
        "n_degenerate": eval.n_degenerate,
        "rows": eval.rows,
    });
    output::emit(
        command,
        &SimConfig {
            args,
            scenario: &scenario,
            estimators: &est,
        },
        &summary,
        args.out.output.as_deref(),
        || output::metrics_table(&eval.rows),
    )
}

pub fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    check_output_dirs(&args.out)?;
    let mut default = SimScenario::default_parallel();
    default.lambda = 0.6;
    let (scenario, baselines) = load_scenario(&args.scenario, default)?;
    let est = estimators(&args.scenario, &scenario);
    let result = replicate_ascertainment_sweep(&scenario, &baselines, args.configs, &est)?;
    if let Some(path) = &args.out.csv {
        output::write_csv(path, &result.rows)?;
    }
    output::emit(
        "sweep",
        &SimConfig {
            args,
            scenario: &scenario,
            estimators: &est,
        },
        &result,
        args.out.output.as_deref(),
        || {
            let mut s = format!("{:<26} {:>10} {:>10} {:>10}\n", "estimator", "med|bias|", "median cp", "cp<0.93");
            for row in &result.summary {
                s += &format!(
                    "{:<26} {:>10.4} {:>10.4} {:>10.3}\n",
                    row.estimator.name(),
                    row.abs_bias.map_or(f64::NAN, |q| q.median),
                    row.cp.map_or(f64::NAN, |q| q.median),
                    row.share_cp_below_093
                );
            }
            s
        },
    )
}
