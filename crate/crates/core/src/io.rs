//! CSV schemas shared by the CLI and the experiment harnesses.
//!
//! Routing matrix: header `counter,<route names...>`, one row per counter,
//! entries in [0, 1]. Series files (link counts, ground truth, estimates):
//! header `t,<column names...>`, one row per epoch; the `t` column is
//! advisory and the epoch index comes from row order. Column order is
//! reconciled against the routing matrix by name.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::calibrate::PriorSchedule;
use crate::gssm::SsmFit;
use crate::multilevel::{FilterDiagnostics, PosteriorSummary};
use crate::network::RoutingMatrix;
use crate::simstudy::{BenchTable, LErrors, RelErrTable};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: row {row} has {got} fields, expected {expected}")]
    RaggedRow { path: String, row: usize, expected: usize, got: usize },
    #[error("{path}: cannot parse '{value}' at row {row}, column {col}")]
    Parse { path: String, row: usize, col: String, value: String },
    #[error("{path}: column '{name}' not found")]
    MissingColumn { path: String, name: String },
    #[error("{path}: negative entry {value} at row {row}, column {col}")]
    NegativeEntry { path: String, row: usize, col: String, value: f64 },
    #[error("link file has {got} epochs but truth has {expected}")]
    EpochMismatch { expected: usize, got: usize },
    #[error("file {path} is empty")]
    Empty { path: String },
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Read a routing matrix: first column counter names, header row route
/// names.
pub fn read_routing_csv(path: &Path) -> Result<RoutingMatrix, IoError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(IoError::Empty { path: path_str(path) });
    }
    let col_names: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut row_names = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(IoError::RaggedRow {
                path: path_str(path),
                row: row_idx + 1,
                expected: headers.len(),
                got: record.len(),
            });
        }
        row_names.push(record[0].trim().to_string());
        for (ci, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| IoError::Parse {
                path: path_str(path),
                row: row_idx + 1,
                col: col_names[ci].clone(),
                value: field.to_string(),
            })?;
            values.push(v);
        }
    }
    if row_names.is_empty() {
        return Err(IoError::Empty { path: path_str(path) });
    }
    let m = row_names.len();
    let n = col_names.len();
    let entries = DMatrix::from_row_slice(m, n, &values);
    Ok(RoutingMatrix::with_names(entries, row_names, col_names)?)
}

pub fn write_routing_csv(path: &Path, a: &RoutingMatrix) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["counter".to_string()];
    header.extend(a.col_names().iter().cloned());
    writer.write_record(&header)?;
    for i in 0..a.m() {
        let mut row = vec![a.row_names()[i].clone()];
        for j in 0..a.n() {
            row.push(format!("{}", a.entries()[(i, j)]));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// A named epoch-by-column series; a leading `t`/`time` column is skipped.
pub fn read_series_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>), IoError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let skip = headers
        .get(0)
        .map(|h| matches!(h.trim().to_ascii_lowercase().as_str(), "t" | "time" | "epoch"))
        .unwrap_or(false);
    let start = usize::from(skip);
    let names: Vec<String> = headers.iter().skip(start).map(|s| s.trim().to_string()).collect();
    if names.is_empty() {
        return Err(IoError::Empty { path: path_str(path) });
    }
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(IoError::RaggedRow {
                path: path_str(path),
                row: row_idx + 1,
                expected: headers.len(),
                got: record.len(),
            });
        }
        for (ci, field) in record.iter().skip(start).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| IoError::Parse {
                path: path_str(path),
                row: row_idx + 1,
                col: names[ci].clone(),
                value: field.to_string(),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(IoError::Empty { path: path_str(path) });
    }
    let data = DMatrix::from_row_slice(rows, names.len(), &values);
    Ok((names, data))
}

pub fn write_series_csv(path: &Path, names: &[String], data: &DMatrix<f64>) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    writer.write_record(&header)?;
    for t in 0..data.nrows() {
        let mut row = vec![t.to_string()];
        for j in 0..data.ncols() {
            row.push(format!("{}", data[(t, j)]));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// A validated dataset: counters, routing, optional ground truth, all with
/// columns aligned to the routing matrix's naming.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub routing: RoutingMatrix,
    pub y: DMatrix<f64>,
    pub truth: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub t_len: usize,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub redundant_rows: usize,
    /// Epochs where the supplied truth violates `A x = y` beyond the 1e-6
    /// relative tolerance, with the relative residual.
    pub truth_violations: Vec<(usize, f64)>,
}

/// Reorder `data` columns from `names` order into `want` order by name.
fn align_columns(
    path: &Path,
    names: &[String],
    data: &DMatrix<f64>,
    want: &[String],
) -> Result<DMatrix<f64>, IoError> {
    let mut order = Vec::with_capacity(want.len());
    for w in want {
        let idx = names.iter().position(|n| n == w).ok_or_else(|| IoError::MissingColumn {
            path: path_str(path),
            name: w.clone(),
        })?;
        order.push(idx);
    }
    Ok(DMatrix::from_fn(data.nrows(), want.len(), |t, j| data[(t, order[j])]))
}

fn check_nonnegative(path: &Path, names: &[String], data: &DMatrix<f64>) -> Result<(), IoError> {
    for t in 0..data.nrows() {
        for j in 0..data.ncols() {
            if data[(t, j)] < 0.0 {
                return Err(IoError::NegativeEntry {
                    path: path_str(path),
                    row: t + 1,
                    col: names[j].clone(),
                    value: data[(t, j)],
                });
            }
        }
    }
    Ok(())
}

/// Load and validate a dataset: shapes, nonnegativity, effective rank, and
/// (when truth is supplied) per-epoch consistency of `A x_true` with `y`.
pub fn ingest(
    routing_path: &Path,
    links_path: &Path,
    truth_path: Option<&Path>,
) -> Result<(Dataset, IngestReport), IoError> {
    let routing = read_routing_csv(routing_path)?;
    let (link_names, y_raw) = read_series_csv(links_path)?;
    let y = align_columns(links_path, &link_names, &y_raw, routing.row_names())?;
    check_nonnegative(links_path, routing.row_names(), &y)?;

    let truth = match truth_path {
        Some(p) => {
            let (truth_names, x_raw) = read_series_csv(p)?;
            let x = align_columns(p, &truth_names, &x_raw, routing.col_names())?;
            check_nonnegative(p, routing.col_names(), &x)?;
            if x.nrows() != y.nrows() {
                return Err(IoError::EpochMismatch { expected: x.nrows(), got: y.nrows() });
            }
            Some(x)
        }
        None => None,
    };

    let mut truth_violations = Vec::new();
    if let Some(x) = &truth {
        for t in 0..y.nrows() {
            let y_t = y.row(t).transpose();
            let y_hat = routing.entries() * x.row(t).transpose();
            let rel = (&y_hat - &y_t).amax() / (1.0 + y_t.amax());
            if rel > 1e-6 {
                truth_violations.push((t, rel));
            }
        }
    }

    let report = IngestReport {
        t_len: y.nrows(),
        m: routing.m(),
        n: routing.n(),
        rank: routing.rank(),
        redundant_rows: routing.m() - routing.rank(),
        truth_violations,
    };
    Ok((Dataset { routing, y, truth }, report))
}

/// Estimates in long format: t, route, mean, median, q05, q95.
pub fn write_estimates_csv(
    path: &Path,
    summary: &PosteriorSummary,
    route_names: &[String],
) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "route", "mean", "median", "q05", "q95"])?;
    for t in 0..summary.mean.nrows() {
        for j in 0..summary.mean.ncols() {
            writer.write_record(&[
                t.to_string(),
                route_names[j].clone(),
                format!("{}", summary.mean[(t, j)]),
                format!("{}", summary.median[(t, j)]),
                format!("{}", summary.q05[(t, j)]),
                format!("{}", summary.q95[(t, j)]),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Per-epoch filter diagnostics: ESS and move-step acceptance rates.
pub fn write_diagnostics_csv(
    path: &Path,
    ess: &DVector<f64>,
    diag: &FilterDiagnostics,
) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "ess", "accept_lambda", "accept_phi", "accept_x"])?;
    for t in 0..ess.len() {
        writer.write_record(&[
            t.to_string(),
            format!("{}", ess[t]),
            format!("{}", diag.accept_lambda.get(t).copied().unwrap_or(f64::NAN)),
            format!("{}", diag.accept_phi.get(t).copied().unwrap_or(f64::NAN)),
            format!("{}", diag.accept_x.get(t).copied().unwrap_or(f64::NAN)),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Stage-1 fit export: t, route, x_hat, v_hat, phi_hat.
pub fn write_fit_csv(path: &Path, fit: &SsmFit, route_names: &[String]) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "route", "x_hat", "v_hat", "phi_hat"])?;
    for t in 0..fit.x_hat.nrows() {
        for j in 0..fit.x_hat.ncols() {
            writer.write_record(&[
                t.to_string(),
                route_names[j].clone(),
                format!("{}", fit.x_hat[(t, j)]),
                format!("{}", fit.v_hat[(t, j)]),
                format!("{}", fit.phi_hat[t]),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Prior schedule in long format plus a scalar sidecar (alpha, rho, tau and
/// the per-epoch beta).
pub fn write_priors_csv(
    path: &Path,
    sidecar_path: &Path,
    priors: &PriorSchedule,
    route_names: &[String],
) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "route", "theta1", "theta2"])?;
    for t in 0..priors.t_len() {
        for j in 0..priors.n() {
            writer.write_record(&[
                t.to_string(),
                route_names[j].clone(),
                format!("{}", priors.theta1[(t, j)]),
                format!("{}", priors.theta2[(t, j)]),
            ])?;
        }
    }
    writer.flush()?;

    let mut sidecar = csv::Writer::from_path(sidecar_path)?;
    sidecar.write_record(["t", "beta", "alpha", "rho", "tau"])?;
    for t in 0..priors.t_len() {
        sidecar.write_record(&[
            t.to_string(),
            format!("{}", priors.beta[t]),
            format!("{}", priors.alpha),
            format!("{}", priors.rho),
            format!("{}", priors.tau),
        ])?;
    }
    sidecar.flush()?;
    Ok(())
}

/// Method-by-errors metric table.
pub fn write_metrics_csv(path: &Path, rows: &[(String, LErrors)]) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["method", "mean_l2", "se_l2", "mean_l1", "se_l1"])?;
    for (method, e) in rows {
        writer.write_record(&[
            method.clone(),
            format!("{}", e.mean_l2),
            format!("{}", e.se_l2),
            format!("{}", e.mean_l1),
            format!("{}", e.se_l1),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_relerr_csv(path: &Path, table: &RelErrTable) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "topology", "dim", "rep", "method", "mean_l1", "se_l1", "mean_l2", "se_l2", "median_ess",
    ])?;
    for r in &table.rows {
        writer.write_record(&[
            r.topology.clone(),
            r.dim.to_string(),
            r.rep.to_string(),
            r.method.clone(),
            format!("{}", r.errors.mean_l1),
            format!("{}", r.errors.se_l1),
            format!("{}", r.errors.mean_l2),
            format!("{}", r.errors.se_l2),
            format!("{}", r.median_ess),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_bench_csv(path: &Path, table: &BenchTable) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "run", "topology", "dim", "method", "log10_sparsity", "mean_l1", "se_l1", "mean_l2",
        "se_l2",
    ])?;
    for r in &table.rows {
        writer.write_record(&[
            r.run.to_string(),
            r.topology.clone(),
            r.dim.to_string(),
            r.method.clone(),
            format!("{}", r.sparsity),
            format!("{}", r.errors.mean_l1),
            format!("{}", r.errors.se_l1),
            format!("{}", r.errors.mean_l2),
            format!("{}", r.errors.se_l2),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
