use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::Failure;
use crtnd_core::simulation::MetricsRow;
use crtnd_core::EstimateReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    schema_version: u32,
    software: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    result: &'a R,
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| crtnd_core::Error::Io(format!("{}: {e}", path.display())).into())
}

/// Writes the JSON report to `output` (stdout when `None`). The table is
/// printed only when the JSON went to a file.
pub fn emit<C: Serialize, R: Serialize>(
    command: &str,
    config: &C,
    result: &R,
    output: Option<&Path>,
    table: impl FnOnce() -> String,
) -> Result<(), Failure> {
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        software: "crtnd",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        result,
    };
    let json = serde_json::to_string_pretty(&envelope)
        .map_err(|e| Failure::validation(format!("cannot serialize report: {e}")))?;
    match output {
        Some(path) => {
            write_file(path, &(json + "\n"))?;
            print!("{}", table());
        }
        None => println!("{json}"),
    }
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Failure::validation(format!("cannot write CSV: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::validation(format!("cannot write CSV: {e}")))?;
    write_file(path, &String::from_utf8_lossy(&bytes))
}

#[derive(Serialize)]
pub struct EstimateRow {
    pub method: String,
    pub estimate: f64,
    pub log_estimate: f64,
    pub se_log: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub ci_method: Option<String>,
    pub p_value: Option<f64>,
    pub alpha: f64,
}

impl From<&EstimateReport> for EstimateRow {
    fn from(r: &EstimateReport) -> Self {
        EstimateRow {
            method: r.method.name().to_string(),
            estimate: r.estimate(),
            log_estimate: r.log_estimate,
            se_log: r.se_log,
            ci_low: r.ci.map(|c| c.low),
            ci_high: r.ci.map(|c| c.high),
            ci_method: r
                .ci_method
                .and_then(|m| serde_json::to_value(m).ok())
                .and_then(|v| v.as_str().map(str::to_string)),
            p_value: r.p_value,
            alpha: r.alpha,
        }
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.prec$}"))
}

pub fn estimate_table(reports: &[EstimateReport]) -> String {
    let mut s = format!(
        "{:<20} {:>10} {:>10} {:>10} {:>10} {:>10} {:>16}\n",
        "method", "estimate", "log", "se(log)", "ci_low", "ci_high", "p"
    );
    for r in reports {
        let row = EstimateRow::from(r);
        let _ = writeln!(
            s,
            "{:<20} {:>10.4} {:>10.4} {:>10} {:>10} {:>10} {:>16}",
            row.method,
            row.estimate,
            row.log_estimate,
            opt(row.se_log, 4),
            opt(row.ci_low, 4),
            opt(row.ci_high, 4),
            opt(row.p_value, 4),
        );
        for w in r.warnings() {
            let _ = writeln!(s, "  warning: {w}");
        }
    }
    s
}

pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut s = format!(
        "{:<26} {:>7} {:>8} {:>7} {:>7} {:>6} {:>6} {:>7}\n",
        "estimator", "lambda", "bias", "se", "ase", "por", "cp", "n"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<26} {:>7.3} {:>8.4} {:>7.4} {:>7} {:>6.3} {:>6.3} {:>7}",
            r.estimator.name(),
            r.lambda,
            r.bias,
            r.se,
            opt(r.ase, 4),
            r.por,
            r.cp,
            r.n_effective
        );
    }
    s
}
