use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcg::SolveReport;

/// One line of the benchmark summary CSV: mean/std iterations per `(method, N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub iters_mean: f64,
    /// Population standard deviation.
    pub iters_std: f64,
    pub wall_ms_mean: f64,
    pub iters_min: usize,
    pub iters_max: usize,
    pub failures: usize,
    pub frames: usize,
}

/// Groups reports by `(method, N)` in order of first appearance.
pub fn aggregate_reports(reports: &[SolveReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in reports {
        let key = (r.method.clone(), r.n);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, n)| {
            let group: Vec<&SolveReport> = reports.iter().filter(|r| r.method == method && r.n == n).collect();
            let count = group.len() as f64;
            let iters: Vec<f64> = group.iter().map(|r| r.iterations as f64).collect();
            let mean = iters.iter().sum::<f64>() / count;
            let var = iters.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count;
            SummaryRow {
                method,
                n,
                iters_mean: mean,
                iters_std: var.sqrt(),
                wall_ms_mean: group.iter().map(|r| r.wall_ms).sum::<f64>() / count,
                iters_min: group.iter().map(|r| r.iterations).min().unwrap_or(0),
                iters_max: group.iter().map(|r| r.iterations).max().unwrap_or(0),
                failures: group.iter().filter(|r| !r.converged).count(),
                frames: group.len(),
            }
        })
        .collect()
}

/// Writes rows with a header line; the column order is the struct field order.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn to_csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::contract(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::contract(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::contract(e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::contract(format!("{other:?}")),
    }
}
