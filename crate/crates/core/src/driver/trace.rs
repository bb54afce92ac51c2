//! Per-iteration records of an adaptive run, their CSV/JSON forms and
//! log-log slope fits.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub n_elements: usize,
    /// Free degrees of freedom.
    pub n_dofs: usize,
    pub marked: usize,
    /// Tracked discrete eigenvalues, ascending; empty for source problems.
    pub lambdas: Vec<f64>,
    pub eta2: f64,
    pub osc2: f64,
    /// Squared gap, squared energy error or eigenvalue-error proxy.
    pub gap2: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxDof,
    MaxIterations,
    Converged,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AfemTrace {
    pub problem: String,
    pub degree: usize,
    /// 0-based global index of the first tracked eigenvalue.
    pub first_index: usize,
    pub rows: Vec<TraceRow>,
    /// Sizes of the clusters detected among the tracked eigenvalues, one
    /// entry per row.
    pub cluster_sizes: Vec<Vec<usize>>,
    pub stop: StopReason,
    /// Mesh produced by the last refinement (or the last solved mesh when the
    /// loop stopped before refining).
    #[serde(skip)]
    pub final_mesh: Option<Mesh>,
}

impl AfemTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Number of tracked eigenvalues (the lambda_* columns).
    pub fn n_tracked(&self) -> usize {
        self.rows.first().map_or(0, |r| r.lambdas.len())
    }

    pub fn values(&self, field: TraceField) -> Vec<Option<f64>> {
        let t0 = self.rows.first().map_or(0, |r| r.n_elements);
        self.rows.iter().map(|r| field.get(r, t0)).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(&self.rows, path)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }
}

/// Column names in file order for `m` tracked eigenvalues.
pub fn csv_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iter", "n_elements", "n_dofs", "marked"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=m).map(|i| format!("lambda_{i}")));
    h.extend(["eta2", "osc2", "gap2", "seconds"].iter().map(|s| s.to_string()));
    h
}

pub fn write_csv(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let m = rows.first().map_or(0, |r| r.lambdas.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(m))?;
    for r in rows {
        if r.lambdas.len() != m {
            return Err(Error::DimensionMismatch(format!("row {} has {} eigenvalues, header has {m}", r.iter, r.lambdas.len())));
        }
        let mut rec = vec![r.iter.to_string(), r.n_elements.to_string(), r.n_dofs.to_string(), r.marked.to_string()];
        rec.extend(r.lambdas.iter().map(f64::to_string));
        rec.push(r.eta2.to_string());
        rec.push(r.osc2.to_string());
        rec.push(r.gap2.map(|g| g.to_string()).unwrap_or_default());
        rec.push(r.seconds.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let m = header.len().checked_sub(8).ok_or_else(|| Error::InvalidArgument(format!("trace header has only {} columns", header.len())))?;
    let expected = csv_header(m);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::InvalidArgument(format!("unexpected trace header {:?}", header)));
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number '{s}': {e}")));
    let parse_u = |s: &str| s.parse::<usize>().map_err(|e| Error::InvalidArgument(format!("bad integer '{s}': {e}")));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let gap = &rec[m + 6];
        rows.push(TraceRow {
            iter: parse_u(&rec[0])?,
            n_elements: parse_u(&rec[1])?,
            n_dofs: parse_u(&rec[2])?,
            marked: parse_u(&rec[3])?,
            lambdas: (0..m).map(|i| parse_f(&rec[4 + i])).collect::<Result<_>>()?,
            eta2: parse_f(&rec[m + 4])?,
            osc2: parse_f(&rec[m + 5])?,
            gap2: if gap.is_empty() { None } else { Some(parse_f(gap)?) },
            seconds: parse_f(&rec[m + 7])?,
        });
    }
    Ok(rows)
}

/// A trace column (or a quantity derived from one) usable as a fit or plot axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceField {
    Iteration,
    Elements,
    /// #T_k − #T_0
    ElementsAdded,
    Dofs,
    Marked,
    /// 1-based position among the tracked eigenvalues.
    Lambda(usize),
    /// |λ_{h,member} − exact|
    LambdaError { member: usize, exact: f64 },
    Eta2,
    Eta,
    Osc2,
    Gap2,
    Seconds,
}

impl TraceField {
    pub fn get(&self, r: &TraceRow, elements0: usize) -> Option<f64> {
        Some(match *self {
            TraceField::Iteration => r.iter as f64,
            TraceField::Elements => r.n_elements as f64,
            TraceField::ElementsAdded => (r.n_elements - elements0) as f64,
            TraceField::Dofs => r.n_dofs as f64,
            TraceField::Marked => r.marked as f64,
            TraceField::Lambda(i) => *r.lambdas.get(i.checked_sub(1)?)?,
            TraceField::LambdaError { member, exact } => (r.lambdas.get(member.checked_sub(1)?)? - exact).abs(),
            TraceField::Eta2 => r.eta2,
            TraceField::Eta => r.eta2.sqrt(),
            TraceField::Osc2 => r.osc2,
            TraceField::Gap2 => r.gap2?,
            TraceField::Seconds => r.seconds,
        })
    }

    pub fn label(&self) -> String {
        match *self {
            TraceField::Iteration => "iteration".into(),
            TraceField::Elements => "elements".into(),
            TraceField::ElementsAdded => "added elements".into(),
            TraceField::Dofs => "DOFs".into(),
            TraceField::Marked => "marked".into(),
            TraceField::Lambda(i) => format!("lambda_{i}"),
            TraceField::LambdaError { member, .. } => format!("|lambda_{member} - lambda|"),
            TraceField::Eta2 => "eta^2".into(),
            TraceField::Eta => "eta".into(),
            TraceField::Osc2 => "osc^2".into(),
            TraceField::Gap2 => "gap^2".into(),
            TraceField::Seconds => "seconds".into(),
        }
    }
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} abscissae vs {} ordinates", x.len(), y.len())));
    }
    if let Some(bad) = x.iter().chain(y).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("log-log fit needs positive finite data, got {bad}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_slope(&lx, &ly)
}

/// Least-squares slope of y against x.
pub fn linear_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::InvalidArgument(format!("slope fit needs at least 3 points, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("slope fit needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

fn window_pairs(trace: &AfemTrace, y: TraceField, x: TraceField, window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = trace.rows.len();
    let start = n.saturating_sub(window);
    let xs = trace.values(x);
    let ys = trace.values(y);
    let mut px = Vec::new();
    let mut py = Vec::new();
    for i in start..n {
        match (xs[i], ys[i]) {
            (Some(a), Some(b)) => {
                px.push(a);
                py.push(b);
            }
            _ => return Err(Error::InvalidArgument(format!("{} or {} missing at iteration {}", y.label(), x.label(), trace.rows[i].iter))),
        }
    }
    Ok((px, py))
}

/// Log-log slope of `y` against `x` over the last `window` rows.
pub fn fit_slope(trace: &AfemTrace, y: TraceField, x: TraceField, window: usize) -> Result<f64> {
    let (px, py) = window_pairs(trace, y, x, window)?;
    log_log_slope(&px, &py)
}

/// Slope of ln y against the iteration counter over the last `window` rows;
/// negative for geometric decay.
pub fn fit_decay_rate(trace: &AfemTrace, y: TraceField, window: usize) -> Result<f64> {
    let (px, py) = window_pairs(trace, y, TraceField::Iteration, window)?;
    if let Some(bad) = py.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("decay fit needs positive finite data, got {bad}")));
    }
    let ly: Vec<f64> = py.iter().map(|v| v.ln()).collect();
    linear_slope(&px, &ly)
}
