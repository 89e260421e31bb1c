//! JSON reports and CSV trajectory tables.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimal_control::{ControlProblem, ControlResidualReport, ControlState};
use crate::timescale::Grid;
use crate::variational::{ResidualReport, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub index: usize,
    pub t: f64,
    pub nu: f64,
    pub y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Residuals {
    Variational(ResidualReport),
    Control(ControlResidualReport),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport<C: Serialize> {
    pub command: String,
    pub config: C,
    pub converged: bool,
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub functional: Option<f64>,
    pub residuals: Option<Residuals>,
    pub trajectory: Vec<TrajectoryRow>,
}

pub fn variational_rows(grid: &Grid, y: &Trajectory) -> Vec<TrajectoryRow> {
    (0..grid.len())
        .map(|j| TrajectoryRow { index: j, t: grid.point(j), nu: grid.nu(j), y: y.row(j).to_vec(), u: None, lambda: None })
        .collect()
}

pub fn control_rows(p: &ControlProblem, s: &ControlState) -> Vec<TrajectoryRow> {
    let (a, last) = (p.a_index(), p.grid().last());
    (0..p.grid().len())
        .map(|j| {
            let defined = j >= a && j < last;
            TrajectoryRow {
                index: j,
                t: p.grid().point(j),
                nu: p.grid().nu(j),
                y: s.y.row(j).to_vec(),
                u: defined.then(|| s.u.row(j - a).to_vec()),
                lambda: defined.then(|| s.lambda.row(j - a).to_vec()),
            }
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header `index,t,nu,y_1..y_n[,u_1..u_m,lambda_1..lambda_n]`. Cells where
/// `u` or `lambda` is undefined stay empty.
pub fn write_csv<W: Write>(out: W, rows: &[TrajectoryRow], n: usize, m: Option<usize>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    let mut header = vec!["index".to_string(), "t".into(), "nu".into()];
    header.extend((1..=n).map(|k| format!("y_{k}")));
    if let Some(m) = m {
        header.extend((1..=m).map(|k| format!("u_{k}")));
        header.extend((1..=n).map(|k| format!("lambda_{k}")));
    }
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.index.to_string(), fmt_num(r.t), fmt_num(r.nu)];
        rec.extend(r.y.iter().copied().map(fmt_num));
        if let Some(m) = m {
            match &r.u {
                Some(u) => rec.extend(u.iter().copied().map(fmt_num)),
                None => rec.extend(std::iter::repeat_n(String::new(), m)),
            }
            match &r.lambda {
                Some(l) => rec.extend(l.iter().copied().map(fmt_num)),
                None => rec.extend(std::iter::repeat_n(String::new(), n)),
            }
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(())
}

pub fn write_csv_file(path: &Path, rows: &[TrajectoryRow], n: usize, m: Option<usize>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    write_csv(std::io::BufWriter::new(f), rows, n, m)
}

/// Parsed trajectory table; `u` and `lambda` cells may be empty.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub u: Vec<Option<Vec<f64>>>,
    pub lambda: Vec<Option<Vec<f64>>>,
}

fn cells(rec: &csv::StringRecord, range: std::ops::Range<usize>, line: usize) -> Result<Option<Vec<f64>>> {
    let raw: Vec<&str> = range.map(|i| rec.get(i).unwrap_or("").trim()).collect();
    if raw.iter().all(|s| s.is_empty()) {
        return Ok(None);
    }
    raw.iter()
        .map(|s| s.parse::<f64>().map_err(|_| Error::ShapeMismatch(format!("line {line}: bad number '{s}'"))))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

pub fn read_csv<R: Read>(input: R, n: usize, m: Option<usize>) -> Result<CsvTable> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let width = 3 + n + m.map_or(0, |m| m + n);
    let header = r.headers().map_err(|e| Error::ShapeMismatch(format!("csv: {e}")))?.clone();
    if header.len() != width {
        return Err(Error::ShapeMismatch(format!("expected {width} columns, header has {}", header.len())));
    }
    let mut table = CsvTable { t: Vec::new(), y: Vec::new(), u: Vec::new(), lambda: Vec::new() };
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::ShapeMismatch(format!("csv: {e}")))?;
        if rec.len() != width {
            return Err(Error::ShapeMismatch(format!("line {line}: expected {width} columns")));
        }
        let t = cells(&rec, 1..2, line)?.ok_or_else(|| Error::ShapeMismatch(format!("line {line}: missing t")))?;
        let y = cells(&rec, 3..3 + n, line)?.ok_or_else(|| Error::ShapeMismatch(format!("line {line}: missing y")))?;
        table.t.push(t[0]);
        table.y.push(y);
        if let Some(m) = m {
            table.u.push(cells(&rec, 3 + n..3 + n + m, line)?);
            table.lambda.push(cells(&rec, 3 + n + m..width, line)?);
        }
    }
    Ok(table)
}
