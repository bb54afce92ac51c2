//! Adaptive loops: Solve → Estimate → Mark → Refine for an eigenvalue cluster,
//! for the first N eigenvalues, or for a vector of source problems.

mod plot;
mod trace;

#[cfg(test)]
mod tests;

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use plot::{emit_plot, emit_plot_series, plot_bounds, render, PlotBounds};
pub use trace::{csv_header, fit_decay_rate, fit_slope, linear_slope, log_log_slope, read_csv, write_csv, AfemTrace, StopReason, TraceField, TraceRow};

use crate::eigsolve::{detect_cluster, solve_smallest_with, EigenCluster, EigenOptions, EigenPair};
use crate::estimator::{eigen_indicators, source_indicators, IndicatorField};
use crate::fem::{assemble_load, assemble_mass, assemble_stiffness, FeSpace};
use crate::gap::{energy_error_squared, GapGrams, DEFAULT_SUBDIVISION};
use crate::linalg::SparseCholesky;
use crate::marking::dorfler_mark;
use crate::mesh::Mesh;
use crate::problems::{by_name, ProblemSpec, SourceProblem};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Track the `index`-th cluster (1-based, ascending) of multiplicity q.
    Cluster { index: usize, multiplicity: usize },
    /// Track the first N eigenvalues.
    FirstN(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Dorfler,
    /// Mark every element.
    Uniform,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AfemConfig {
    /// Name accepted by [`crate::problems::by_name`].
    pub problem: String,
    pub degree: usize,
    pub theta: f64,
    /// Bisections applied to each marked element.
    pub bisections: u32,
    pub mode: Mode,
    pub strategy: Strategy,
    pub max_dof: usize,
    pub max_iterations: usize,
    pub eig_tol: f64,
    pub compute_gap: bool,
    /// Secondary stop: total η² at or below this value.
    pub eta2_tol: f64,
    /// Relative spectral gap below which neighbouring eigenvalues form a cluster.
    pub cluster_tol: f64,
    /// Uniform refinement rounds applied to the problem's coarse mesh; the
    /// problem's own default when unset.
    pub pre_refinements: Option<usize>,
    /// Record wall time; off gives byte-reproducible traces.
    pub include_timing: bool,
    /// Directory receiving one VTK file per iteration.
    pub mesh_out: Option<PathBuf>,
}

impl Default for AfemConfig {
    fn default() -> Self {
        Self {
            problem: "square".into(),
            degree: 1,
            theta: 0.5,
            bisections: 1,
            mode: Mode::Cluster { index: 1, multiplicity: 1 },
            strategy: Strategy::Dorfler,
            max_dof: 50_000,
            max_iterations: 100,
            eig_tol: 1e-10,
            compute_gap: true,
            eta2_tol: 0.0,
            cluster_tol: 1e-3,
            pre_refinements: None,
            include_timing: true,
            mesh_out: None,
        }
    }
}

impl AfemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta = {} outside (0, 1)", self.theta));
        }
        if !(1..=2).contains(&self.degree) {
            return bad(format!("degree {} not supported", self.degree));
        }
        if self.bisections == 0 {
            return bad("bisections must be at least 1".into());
        }
        match self.mode {
            Mode::Cluster { index, multiplicity } if index == 0 || multiplicity == 0 => return bad("cluster index and multiplicity are 1-based".into()),
            Mode::FirstN(0) => return bad("first-N mode needs N ≥ 1".into()),
            _ => {}
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.eig_tol > 0.0) || !(self.cluster_tol > 0.0) || !(self.eta2_tol >= 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }
}

/// Runs the eigenvalue loop on the named problem in either mode.
pub fn run_afem(config: &AfemConfig) -> Result<AfemTrace> {
    config.validate()?;
    run_afem_problem(&by_name(&config.problem)?, config)
}

/// First-N loop on the named problem; `config.mode` must be `FirstN`.
pub fn run_afem_first_n(config: &AfemConfig) -> Result<AfemTrace> {
    if !matches!(config.mode, Mode::FirstN(_)) {
        return Err(Error::InvalidArgument("run_afem_first_n needs a first-N mode".into()));
    }
    run_afem(config)
}

fn mark(eta2: &[f64], config: &AfemConfig) -> Result<BTreeSet<usize>> {
    Ok(match config.strategy {
        Strategy::Dorfler => dorfler_mark(eta2, config.theta)?.marked,
        Strategy::Uniform => (0..eta2.len()).collect(),
    })
}

fn write_mesh(config: &AfemConfig, iter: usize, mesh: &Mesh, field: &IndicatorField) -> Result<()> {
    if let Some(dir) = &config.mesh_out {
        std::fs::create_dir_all(dir)?;
        mesh.write_vtk(dir.join(format!("mesh_{iter:03}.vtk")), &[("eta2", &field.eta2), ("osc2", &field.osc2)])?;
    }
    Ok(())
}

/// Which eigenvalues are tracked and how they split into clusters, fixed at
/// iteration 0.
struct Tracking {
    /// Global indices of the tracked eigenvalues.
    range: Range<usize>,
    /// Clusters inside `range` (global indices) and their 1-based numbers.
    clusters: Vec<(Range<usize>, usize)>,
}

fn solve(k: &crate::linalg::SparseSym, m: &crate::linalg::SparseSym, nev: usize, config: &AfemConfig) -> Result<Vec<EigenPair>> {
    let opts = EigenOptions {
        tol: config.eig_tol,
        ..Default::default()
    };
    solve_smallest_with(k, m, nev.min(k.dim()), &opts)
}

fn values(pairs: &[EigenPair]) -> Vec<f64> {
    pairs.iter().map(|p| p.value).collect()
}

/// Solves with a growing number of pairs until the clusters needed by the
/// mode are certified by at least one eigenvalue above them.
fn initial_tracking(k: &crate::linalg::SparseSym, m: &crate::linalg::SparseSym, config: &AfemConfig) -> Result<(Tracking, Vec<EigenPair>)> {
    let n = k.dim();
    let mut nev = match config.mode {
        Mode::Cluster { index, multiplicity } => index + multiplicity + 1,
        Mode::FirstN(count) => count + 2,
    };
    loop {
        let pairs = solve(k, m, nev, config)?;
        let ranges = detect_cluster(&values(&pairs), config.cluster_tol);
        let certified = &ranges[..ranges.len() - 1];
        let found = match config.mode {
            Mode::Cluster { index, multiplicity } => certified.get(index - 1).map(|r| {
                if r.len() != multiplicity {
                    return Err(Error::ClusterIdentityLost(format!(
                        "cluster {index} has {} members on the initial mesh, expected {multiplicity}",
                        r.len()
                    )));
                }
                Ok(Tracking {
                    range: r.clone(),
                    clusters: vec![(r.clone(), index)],
                })
            }),
            Mode::FirstN(count) => certified.iter().position(|r| r.end >= count).map(|last| {
                let end = certified[last].end;
                if end != count {
                    log::warn!("N = {count} splits a cluster of the discrete spectrum, extending to N = {end}");
                }
                Ok(Tracking {
                    range: 0..end,
                    clusters: certified[..=last].iter().cloned().zip(1..).collect(),
                })
            }),
        };
        match found {
            Some(t) => return Ok((t?, pairs)),
            None if nev >= n => {
                return Err(Error::ClusterIdentityLost(format!("the discrete spectrum of dimension {n} cannot certify the requested clusters")));
            }
            None => nev = (2 * nev).min(n),
        }
    }
}

/// Checks that the tracked block still starts and ends at cluster boundaries
/// and, in single-cluster mode, that the cluster keeps its multiplicity.
fn check_tracking(tracking: &Tracking, ranges: &[Range<usize>], single: bool, iter: usize) -> Result<Vec<usize>> {
    let certified = &ranges[..ranges.len() - 1];
    let inside: Vec<&Range<usize>> = certified.iter().filter(|r| r.start >= tracking.range.start && r.end <= tracking.range.end).collect();
    let starts = tracking.range.start == 0 || certified.iter().any(|r| r.end == tracking.range.start);
    let ends = certified.iter().any(|r| r.end == tracking.range.end);
    if !starts || !ends || (single && inside.len() != 1) {
        return Err(Error::ClusterIdentityLost(format!(
            "iteration {iter}: eigenvalues {}..{} no longer form {} (detected clusters {:?})",
            tracking.range.start + 1,
            tracking.range.end,
            if single { "one cluster" } else { "whole clusters" },
            ranges
        )));
    }
    Ok(inside.iter().map(|r| r.len()).collect())
}

/// Squared gaps summed over the tracked clusters, or the summed eigenvalue
/// error against reference values when no exact eigenspace is known.
fn gap_squared(spec: &ProblemSpec, tracking: &Tracking, pairs: &[EigenPair], space: &FeSpace) -> Result<Option<f64>> {
    let mut total = 0.0;
    for (range, number) in &tracking.clusters {
        match spec.exact_cluster(*number) {
            Some(exact) if exact.q() == range.len() => {
                let cluster = EigenCluster::from_pairs(space, pairs, range.clone(), *number);
                let d = GapGrams::compute(exact, &cluster, space, &spec.coefficients, DEFAULT_SUBDIVISION)?.gap()?;
                total += d * d;
            }
            _ => {
                for i in range.clone() {
                    match spec.reference_value(i + 1) {
                        Some(r) => total += (pairs[i].value - r).abs(),
                        None => return Ok(None),
                    }
                }
            }
        }
    }
    Ok(Some(total))
}

/// Eigenvalue loop on an explicit problem.
pub fn run_afem_problem(spec: &ProblemSpec, config: &AfemConfig) -> Result<AfemTrace> {
    config.validate()?;
    let single = matches!(config.mode, Mode::Cluster { .. });
    let mut mesh = spec.initial_mesh.refine_uniform(config.pre_refinements.unwrap_or(spec.pre_refinements))?;
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut sizes = Vec::new();
    let mut tracking: Option<Tracking> = None;
    let mut iter = 0;
    let stop = loop {
        let clock = Instant::now();
        let space = FeSpace::new(&mesh, config.degree)?;
        let k = assemble_stiffness(&space, &spec.coefficients)?;
        let m = assemble_mass(&space)?;
        let pairs = match &tracking {
            None => {
                let (t, pairs) = initial_tracking(&k, &m, config)?;
                tracking = Some(t);
                pairs
            }
            Some(t) => solve(&k, &m, t.range.end + 2, config)?,
        };
        let t = tracking.as_ref().unwrap();
        let ranges = detect_cluster(&values(&pairs), config.cluster_tol);
        let row_sizes = check_tracking(t, &ranges, single, iter)?;

        let index = match config.mode {
            Mode::Cluster { index, .. } => index,
            Mode::FirstN(_) => 0,
        };
        let cluster = EigenCluster::from_pairs(&space, &pairs, t.range.clone(), index);
        let field = eigen_indicators(&space, &spec.coefficients, &cluster)?;
        let gap2 = if config.compute_gap { gap_squared(spec, t, &pairs, &space)? } else { None };
        write_mesh(config, iter, &mesh, &field)?;

        if let Some(prev) = rows.last() {
            for (i, (a, b)) in prev.lambdas.iter().zip(&cluster.values).enumerate() {
                if *b > a * (1.0 + 10.0 * config.eig_tol) {
                    log::warn!("iteration {iter}: tracked eigenvalue {} rose from {a} to {b}", t.range.start + i + 1);
                }
            }
        }

        let mut row = TraceRow {
            iter,
            n_elements: mesh.n_elements(),
            n_dofs: space.n_free(),
            marked: 0,
            lambdas: cluster.values.clone(),
            eta2: field.total_eta2,
            osc2: field.total_osc2,
            gap2,
            seconds: 0.0,
        };
        let outcome = advance(&mut mesh, &field, &mut row, config, iter)?;
        if config.include_timing {
            row.seconds = clock.elapsed().as_secs_f64();
        }
        log::info!(
            "iter {iter}: {} elements, {} dofs, lambda {:?}, eta2 {:e}, gap2 {:?}, marked {}",
            row.n_elements,
            row.n_dofs,
            row.lambdas,
            row.eta2,
            row.gap2,
            row.marked
        );
        rows.push(row);
        sizes.push(row_sizes);
        if let Some(reason) = outcome {
            break reason;
        }
        iter += 1;
    };
    Ok(AfemTrace {
        problem: spec.name.clone(),
        degree: config.degree,
        first_index: tracking.map_or(0, |t| t.range.start),
        rows,
        cluster_sizes: sizes,
        stop,
        final_mesh: Some(mesh),
    })
}

/// Stopping test, then marking and refinement; returns the stop reason when
/// the loop is done.
fn advance(mesh: &mut Mesh, field: &IndicatorField, row: &mut TraceRow, config: &AfemConfig, iter: usize) -> Result<Option<StopReason>> {
    if field.total_eta2 <= config.eta2_tol {
        return Ok(Some(StopReason::Converged));
    }
    if row.n_dofs >= config.max_dof {
        return Ok(Some(StopReason::MaxDof));
    }
    let marked = mark(&field.eta2, config)?;
    row.marked = marked.len();
    *mesh = mesh.refine(&marked, config.bisections)?.mesh;
    if iter + 1 >= config.max_iterations {
        return Ok(Some(StopReason::MaxIterations));
    }
    Ok(None)
}

/// Source-problem loop: one linear solve per right-hand side, indicators
/// summed over the components, gap² the summed squared energy error when the
/// solutions are known.
pub fn run_afem_source(config: &AfemConfig, problem: &SourceProblem) -> Result<AfemTrace> {
    config.validate()?;
    let spec = &problem.spec;
    let mut mesh = spec.initial_mesh.refine_uniform(config.pre_refinements.unwrap_or(spec.pre_refinements))?;
    let mut rows = Vec::new();
    let mut iter = 0;
    let stop = loop {
        let clock = Instant::now();
        let space = FeSpace::new(&mesh, config.degree)?;
        let k = assemble_stiffness(&space, &spec.coefficients)?;
        let chol = SparseCholesky::factor(&k)?;
        let solutions = problem
            .sources
            .iter()
            .map(|f| Ok(space.extend(&chol.solve(&assemble_load(&space, f)?))))
            .collect::<Result<Vec<_>>>()?;
        let field = source_indicators(&space, &spec.coefficients, &solutions, &problem.sources)?;
        let gap2 = if config.compute_gap && !problem.solutions.is_empty() {
            let mut total = 0.0;
            for (uh, exact) in solutions.iter().zip(&problem.solutions) {
                total += energy_error_squared(&space, &spec.coefficients, uh, exact)?;
            }
            Some(total)
        } else {
            None
        };
        write_mesh(config, iter, &mesh, &field)?;
        let mut row = TraceRow {
            iter,
            n_elements: mesh.n_elements(),
            n_dofs: space.n_free(),
            marked: 0,
            lambdas: Vec::new(),
            eta2: field.total_eta2,
            osc2: field.total_osc2,
            gap2,
            seconds: 0.0,
        };
        let outcome = advance(&mut mesh, &field, &mut row, config, iter)?;
        if config.include_timing {
            row.seconds = clock.elapsed().as_secs_f64();
        }
        log::info!("iter {iter}: {} elements, {} dofs, eta2 {:e}, gap2 {:?}, marked {}", row.n_elements, row.n_dofs, row.eta2, row.gap2, row.marked);
        rows.push(row);
        if let Some(reason) = outcome {
            break reason;
        }
        iter += 1;
    };
    let n = rows.len();
    Ok(AfemTrace {
        problem: spec.name.clone(),
        degree: config.degree,
        first_index: 0,
        rows,
        cluster_sizes: vec![Vec::new(); n],
        stop,
        final_mesh: Some(mesh),
    })
}
