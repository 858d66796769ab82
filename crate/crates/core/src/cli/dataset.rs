//! CSV and LibSVM dataset ingestion.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regression::RegressionProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Libsvm,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub problem: RegressionProblem,
    pub source: Option<PathBuf>,
    pub format: Format,
}

impl Dataset {
    pub fn feature_count(&self) -> usize {
        self.problem.d()
    }

    pub fn row_count(&self) -> usize {
        self.problem.n()
    }
}

/// Reads `path` in the given format. `features` fixes the LibSVM column
/// count; otherwise the largest index seen is used.
pub fn parse_dataset(path: &Path, format: Format, features: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut ds = parse_str(&text, format, features)?;
    ds.source = Some(path.to_path_buf());
    Ok(ds)
}

pub fn parse_str(text: &str, format: Format, features: Option<usize>) -> Result<Dataset> {
    let problem = match format {
        Format::Csv => parse_csv(text)?,
        Format::Libsvm => parse_libsvm(text, features)?,
    };
    Ok(Dataset {
        problem,
        source: None,
        format,
    })
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

/// One row per record, last column is the response. A first record with
/// any non-numeric field is taken as a header.
fn parse_csv(text: &str) -> Result<RegressionProblem> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let line = (k + 1) as u64;
        let record = record.map_err(|e| {
            let line = e.position().map_or(line, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(line, |p| p.line());
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if k == 0 => continue,
            Err(e) => return Err(parse_err(line, format!("non-numeric field: {e}"))),
        };
        if values.len() < 2 {
            return Err(parse_err(line, "need at least one feature and a response"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(line, format!("non-finite value {bad}")));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(line, format!("expected {w} fields, found {}", values.len())));
            }
            _ => {}
        }
        rows.push(values);
    }
    build(rows)
}

/// `<label> <index>:<value> ...`, indices 1-based; missing entries are 0.
fn parse_libsvm(text: &str, features: Option<usize>) -> Result<RegressionProblem> {
    let mut entries: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = (k + 1) as u64;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label: f64 = tokens
            .next()
            .unwrap()
            .parse()
            .map_err(|e| parse_err(line, format!("bad label: {e}")))?;
        let mut pairs = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line, format!("expected index:value, found {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|e| parse_err(line, format!("bad index {idx:?}: {e}")))?;
            if idx == 0 {
                return Err(parse_err(line, "indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .map_err(|e| parse_err(line, format!("bad value {val:?}: {e}")))?;
            if !val.is_finite() || !label.is_finite() {
                return Err(parse_err(line, "non-finite value"));
            }
            if let Some(d) = features {
                if idx > d {
                    return Err(Error::DimensionMismatch(format!(
                        "line {line}: index {idx} exceeds feature count {d}"
                    )));
                }
            }
            max_index = max_index.max(idx);
            pairs.push((idx - 1, val));
        }
        entries.push((label, pairs));
    }
    let d = features.unwrap_or(max_index);
    if d == 0 && !entries.is_empty() {
        return Err(parse_err(1, "no features present"));
    }
    let rows = entries
        .into_iter()
        .map(|(label, pairs)| {
            let mut row = vec![0.0; d + 1];
            for (j, v) in pairs {
                row[j] = v;
            }
            row[d] = label;
            row
        })
        .collect();
    build(rows)
}

fn build(rows: Vec<Vec<f64>>) -> Result<RegressionProblem> {
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows"));
    }
    let d = rows[0].len() - 1;
    let n = rows.len();
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for r in rows {
        data.extend_from_slice(&r[..d]);
        y.push(r[d]);
    }
    RegressionProblem::new(Matrix::new(n, d, data)?, y)
}

/// Dense CSV with a header line `x1,...,xd,y`.
pub fn to_csv(p: &RegressionProblem) -> String {
    let mut out = String::new();
    let header: Vec<String> = (1..=p.d()).map(|j| format!("x{j}")).chain(["y".into()]).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..p.n() {
        for v in p.x().row(i) {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{}", p.y()[i]).unwrap();
    }
    out
}

/// LibSVM text with zero entries omitted.
pub fn to_libsvm(p: &RegressionProblem) -> String {
    let mut out = String::new();
    for i in 0..p.n() {
        write!(out, "{}", p.y()[i]).unwrap();
        for (j, v) in p.x().row(i).iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{v}", j + 1).unwrap();
            }
        }
        out.push('\n');
    }
    out
}
