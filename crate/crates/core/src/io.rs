//! CSV dataset formats.
//!
//! Parallel files have the columns `cluster_id, arm, y_count, z_count`,
//! optional covariates `x1..xp` and an optional `dose`. Stepped-wedge files
//! have `cluster_id, period, start_period, y_count, z_count`, one row per
//! cluster and period. Line numbers in errors count the header as line 1.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterPeriodRecord, ClusterRecord, Panel, ParallelData};

const PARALLEL_REQUIRED: [&str; 4] = ["cluster_id", "arm", "y_count", "z_count"];
const SW_COLUMNS: [&str; 5] = ["cluster_id", "period", "start_period", "y_count", "z_count"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum Dataset {
    Parallel(ParallelData),
    SteppedWedge(Panel),
}

fn parse_err(line: u64, column: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: column.to_string(),
        reason: reason.into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => parse_err(
            line,
            "",
            format!("row has {len} fields, the header has {expected_len}"),
        ),
        _ => parse_err(line, "", e.to_string()),
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn header(rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<String>> {
    Ok(rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect())
}

fn covariate_index(name: &str) -> Option<usize> {
    name.strip_prefix('x')?.parse().ok().filter(|&k| k >= 1)
}

/// Column positions of a parallel file.
struct ParallelLayout {
    required: [usize; 4],
    covariates: Vec<usize>,
    dose: Option<usize>,
}

fn parallel_layout(header: &[String]) -> Result<ParallelLayout> {
    let pos: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let missing: Vec<String> = PARALLEL_REQUIRED
        .iter()
        .filter(|c| !pos.contains_key(*c))
        .map(|c| c.to_string())
        .collect();
    let mut covs: Vec<(usize, usize)> = Vec::new();
    let mut unknown = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if PARALLEL_REQUIRED.contains(&h.as_str()) || h == "dose" {
            continue;
        }
        match covariate_index(h) {
            Some(k) => covs.push((k, i)),
            None => unknown.push(h.clone()),
        }
    }
    covs.sort();
    let mut missing = missing;
    for (expected, &(k, _)) in (1..).zip(&covs) {
        if k != expected {
            missing.push(format!("x{expected}"));
            break;
        }
    }
    if pos.len() != header.len() {
        return Err(parse_err(1, "", "duplicate column names in header"));
    }
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(Error::Schema { missing, unknown });
    }
    Ok(ParallelLayout {
        required: PARALLEL_REQUIRED.map(|c| pos[c]),
        covariates: covs.into_iter().map(|(_, i)| i).collect(),
        dose: pos.get("dose").copied(),
    })
}

fn number(row: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let cell = &row[idx];
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_err(line, name, format!("'{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, name, "value must be finite"));
    }
    Ok(v)
}

fn count(row: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let v = number(row, idx, name, line)?;
    if v < 0.0 {
        return Err(parse_err(line, name, format!("negative count {v}")));
    }
    Ok(v)
}

fn index(row: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<usize> {
    let cell = &row[idx];
    cell.parse()
        .map_err(|_| parse_err(line, name, format!("'{cell}' is not a nonnegative integer")))
}

fn arm(cell: &str, line: u64) -> Result<bool> {
    match cell.to_ascii_lowercase().as_str() {
        "1" | "treated" | "intervention" | "true" => Ok(true),
        "0" | "control" | "untreated" | "false" => Ok(false),
        _ => Err(parse_err(line, "arm", format!("'{cell}' is not an arm (use 1 or 0)"))),
    }
}

fn cluster_id(row: &csv::StringRecord, idx: usize, line: u64) -> Result<String> {
    let id = &row[idx];
    if id.is_empty() {
        return Err(parse_err(line, "cluster_id", "empty cluster id"));
    }
    Ok(id.to_string())
}

pub fn parse_parallel(text: &str) -> Result<ParallelData> {
    let mut rdr = reader(text);
    let layout = parallel_layout(&header(&mut rdr)?)?;
    let [id_col, arm_col, y_col, z_col] = layout.required;
    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let id = cluster_id(&row, id_col, line)?;
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(parse_err(
                line,
                "cluster_id",
                format!("duplicate cluster id '{id}' (first seen on line {first})"),
            ));
        }
        let mut rec = ClusterRecord::new(
            id,
            arm(&row[arm_col], line)?,
            count(&row, y_col, "y_count", line)?,
            count(&row, z_col, "z_count", line)?,
        );
        rec.covariates = layout
            .covariates
            .iter()
            .enumerate()
            .map(|(k, &c)| number(&row, c, &format!("x{}", k + 1), line))
            .collect::<Result<_>>()?;
        if let Some(c) = layout.dose {
            let d = number(&row, c, "dose", line)?;
            if !(0.0..=1.0).contains(&d) {
                return Err(parse_err(line, "dose", format!("dose {d} outside [0, 1]")));
            }
            rec.dose = Some(d);
        }
        records.push(rec);
    }
    ParallelData::new(records)
}

pub fn parse_stepped_wedge(text: &str) -> Result<Panel> {
    let mut rdr = reader(text);
    let header = header(&mut rdr)?;
    let missing: Vec<String> = SW_COLUMNS
        .iter()
        .filter(|c| !header.iter().any(|h| h == *c))
        .map(|c| c.to_string())
        .collect();
    let unknown: Vec<String> = header
        .iter()
        .filter(|h| !SW_COLUMNS.contains(&h.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(Error::Schema { missing, unknown });
    }
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let [id_col, period_col, start_col, y_col, z_col] = SW_COLUMNS.map(col);
    let mut seen: HashMap<(String, usize), u64> = HashMap::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let id = cluster_id(&row, id_col, line)?;
        let period = index(&row, period_col, "period", line)?;
        if period == 0 {
            return Err(parse_err(line, "period", "periods are numbered from 1"));
        }
        if let Some(first) = seen.insert((id.clone(), period), line) {
            return Err(parse_err(
                line,
                "period",
                format!("duplicate record for cluster '{id}', period {period} (first seen on line {first})"),
            ));
        }
        records.push(ClusterPeriodRecord {
            cluster_id: id,
            period,
            start_period: index(&row, start_col, "start_period", line)?,
            y_count: count(&row, y_col, "y_count", line)?,
            z_count: count(&row, z_col, "z_count", line)?,
        });
    }
    Panel::from_records(&records)
}

/// Parses either schema; a `period` column selects the stepped-wedge one.
pub fn parse_dataset_str(text: &str) -> Result<Dataset> {
    let mut rdr = reader(text);
    let header = header(&mut rdr)?;
    if header.iter().any(|h| h == "period") {
        parse_stepped_wedge(text).map(Dataset::SteppedWedge)
    } else {
        parse_parallel(text).map(Dataset::Parallel)
    }
}

pub fn parse_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset_str(&read(path)?)
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

pub fn emit_parallel(data: &ParallelData) -> String {
    let mut w = writer();
    let mut head: Vec<String> = PARALLEL_REQUIRED.iter().map(|s| s.to_string()).collect();
    head.extend((1..=data.n_covariates()).map(|k| format!("x{k}")));
    let has_dose = data.has_doses();
    if has_dose {
        head.push("dose".into());
    }
    w.write_record(&head).expect("writing to memory");
    for r in data.records() {
        let mut row = vec![
            r.cluster_id.clone(),
            if r.treated { "1" } else { "0" }.to_string(),
            r.y_count.to_string(),
            r.z_count.to_string(),
        ];
        row.extend(r.covariates.iter().map(f64::to_string));
        if has_dose {
            row.push(r.dose.map_or(String::new(), |d| d.to_string()));
        }
        w.write_record(&row).expect("writing to memory");
    }
    finish(w)
}

pub fn emit_stepped_wedge(panel: &Panel) -> String {
    let mut w = writer();
    w.write_record(SW_COLUMNS).expect("writing to memory");
    for r in panel.to_records() {
        w.write_record([
            r.cluster_id,
            r.period.to_string(),
            r.start_period.to_string(),
            r.y_count.to_string(),
            r.z_count.to_string(),
        ])
        .expect("writing to memory");
    }
    finish(w)
}

pub fn emit_dataset(data: &Dataset) -> String {
    match data {
        Dataset::Parallel(d) => emit_parallel(d),
        Dataset::SteppedWedge(p) => emit_stepped_wedge(p),
    }
}
