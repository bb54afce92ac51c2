//! Smallest eigenpairs of the pencil K x = λ M x.
//!
//! Large problems use a thick-restarted block Krylov method on the shift-invert
//! operator K⁻¹M, with the basis kept M-orthonormal by two passes of classical
//! Gram–Schmidt. Ritz values come from Rayleigh–Ritz on K itself, so they are
//! Rayleigh quotients and bound the discrete eigenvalues from above. Small
//! problems go through a dense generalized solver.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::fem::{b_norm, energy_norm, Coefficients, FeSpace};
use crate::linalg::{axpy, dot, SparseCholesky, SparseSym};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Relative residual target ‖Kx − λMx‖ / (λ‖Mx‖).
    pub tol: f64,
    pub block_size: usize,
    /// Basis size that triggers a thick restart.
    pub max_basis: usize,
    /// Cap on the number of block expansions.
    pub max_iterations: usize,
    pub seed: u64,
    /// Problems up to this dimension are solved densely.
    pub dense_threshold: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            block_size: 4,
            max_basis: 120,
            max_iterations: 2000,
            seed: 0x5eed,
            dense_threshold: 400,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// The `nev` smallest eigenpairs, ascending, with M-orthonormal vectors.
pub fn solve_smallest(k: &SparseSym, m: &SparseSym, nev: usize, tol: f64) -> Result<Vec<EigenPair>> {
    solve_smallest_with(k, m, nev, &EigenOptions { tol, ..Default::default() })
}

pub fn solve_smallest_with(k: &SparseSym, m: &SparseSym, nev: usize, opts: &EigenOptions) -> Result<Vec<EigenPair>> {
    let n = k.dim();
    if m.dim() != n {
        return Err(Error::DimensionMismatch(format!("K is {n}×{n} but M is {0}×{0}", m.dim())));
    }
    if nev == 0 || nev > n {
        return Err(Error::InvalidArgument(format!("requested {nev} eigenpairs of a pencil of dimension {n}")));
    }
    let b = opts.block_size.max(1);
    let basis_cap = opts.max_basis.max(3 * nev + 2 * b);
    let mut pairs = if n <= opts.dense_threshold || basis_cap >= n / 2 {
        dense_smallest(k, m, nev)?
    } else {
        KrylovSolver::new(k, m, nev, opts, basis_cap)?.run()?
    };
    for range in detect_cluster(&pairs.iter().map(|p| p.value).collect::<Vec<_>>(), 1e-3) {
        if range.len() > 1 {
            m_orthonormalize(m, &mut pairs[range]);
        }
    }
    Ok(pairs)
}

fn dense_smallest(k: &SparseSym, m: &SparseSym, nev: usize) -> Result<Vec<EigenPair>> {
    let chol = m
        .to_dense()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::NotConverged("mass factor is singular".into()))?;
    let c = &linv * k.to_dense() * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lt = linv.transpose();
    Ok(order[..nev]
        .iter()
        .map(|&i| {
            let v = &lt * eig.eigenvectors.column(i);
            let mut pair = EigenPair {
                value: eig.eigenvalues[i],
                vector: v.as_slice().to_vec(),
            };
            fix_sign(&mut pair.vector);
            pair
        })
        .collect())
}

/// Makes the entry of largest magnitude positive.
fn fix_sign(v: &mut [f64]) {
    let imax = (0..v.len()).fold(0, |best, i| if v[i].abs() > v[best].abs() + 1e-12 * v[best].abs() { i } else { best });
    if v.get(imax).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Modified Gram–Schmidt in the M-inner product, in place.
fn m_orthonormalize(m: &SparseSym, pairs: &mut [EigenPair]) {
    for i in 0..pairs.len() {
        let (done, rest) = pairs.split_at_mut(i);
        let v = &mut rest[0].vector;
        for p in done.iter() {
            let h = m.bilinear(&p.vector, v);
            axpy(-h, &p.vector, v);
        }
        let norm = m.bilinear(v, v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

struct KrylovSolver<'a> {
    k: &'a SparseSym,
    m: &'a SparseSym,
    chol: SparseCholesky,
    nev: usize,
    tol: f64,
    block: usize,
    cap: usize,
    max_iterations: usize,
    rng: ChaCha8Rng,
    /// M-orthonormal basis
    basis: Vec<Vec<f64>>,
    /// Projected stiffness basisᵀ K basis
    h: DMatrix<f64>,
}

struct Ritz {
    values: Vec<f64>,
    coeffs: DMatrix<f64>,
}

impl<'a> KrylovSolver<'a> {
    fn new(k: &'a SparseSym, m: &'a SparseSym, nev: usize, opts: &EigenOptions, cap: usize) -> Result<Self> {
        Ok(Self {
            k,
            m,
            chol: SparseCholesky::factor(k)?,
            nev,
            tol: opts.tol,
            block: opts.block_size.max(1),
            cap,
            max_iterations: opts.max_iterations,
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            basis: Vec::new(),
            h: DMatrix::zeros(0, 0),
        })
    }

    fn random_vector(&mut self) -> Vec<f64> {
        (0..self.k.dim()).map(|_| StandardNormal.sample(&mut self.rng)).collect()
    }

    /// Orthogonalizes `w` against the basis and appends it; returns false if
    /// `w` was numerically dependent.
    fn append(&mut self, mut w: Vec<f64>) -> bool {
        let mut mw = self.m.mul_vec(&w);
        let initial = dot(&w, &mw).max(0.0).sqrt();
        if initial == 0.0 || !initial.is_finite() {
            return false;
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = self.basis.iter().map(|v| dot(v, &mw)).collect();
            for (v, c) in self.basis.iter().zip(coeffs) {
                axpy(-c, v, &mut w);
            }
            mw = self.m.mul_vec(&w);
        }
        let norm = dot(&w, &mw).max(0.0).sqrt();
        if norm <= 1e-10 * initial {
            return false;
        }
        w.iter_mut().for_each(|x| *x /= norm);
        let kw = self.k.mul_vec(&w);
        let j = self.basis.len();
        let mut h = std::mem::replace(&mut self.h, DMatrix::zeros(0, 0)).resize(j + 1, j + 1, 0.0);
        for (i, v) in self.basis.iter().enumerate() {
            let hij = dot(v, &kw);
            h[(i, j)] = hij;
            h[(j, i)] = hij;
        }
        h[(j, j)] = dot(&w, &kw);
        self.h = h;
        self.basis.push(w);
        true
    }

    /// Appends the block `ws`, substituting random directions for dependent vectors.
    fn append_block(&mut self, ws: Vec<Vec<f64>>) -> Vec<usize> {
        let mut added = Vec::new();
        for w in ws {
            let mut candidate = w;
            for _ in 0..5 {
                if self.append(candidate) {
                    added.push(self.basis.len() - 1);
                    break;
                }
                candidate = self.random_vector();
            }
        }
        added
    }

    fn rayleigh_ritz(&self) -> Ritz {
        let eig = SymmetricEigen::new(self.h.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let coeffs = DMatrix::from_fn(self.h.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        Ritz { values, coeffs }
    }

    fn ritz_vector(&self, y: nalgebra::DVectorView<f64>) -> Vec<f64> {
        let mut x = vec![0.0; self.k.dim()];
        for (v, &c) in self.basis.iter().zip(y.iter()) {
            axpy(c, v, &mut x);
        }
        x
    }

    fn residual(&self, value: f64, x: &[f64]) -> f64 {
        let mut r = self.k.mul_vec(x);
        let mx = self.m.mul_vec(x);
        axpy(-value, &mx, &mut r);
        dot(&r, &r).sqrt() / (value.abs().max(f64::MIN_POSITIVE) * dot(&mx, &mx).sqrt())
    }

    fn shift_invert(&self, x: &[f64]) -> Vec<f64> {
        self.chol.solve(&self.m.mul_vec(x))
    }

    fn run(mut self) -> Result<Vec<EigenPair>> {
        let start: Vec<Vec<f64>> = (0..self.block).map(|_| self.random_vector()).collect();
        let first: Vec<Vec<f64>> = start.iter().map(|x| self.shift_invert(x)).collect();
        let mut last = self.append_block(first);
        let mut worst = f64::INFINITY;
        for iteration in 0..self.max_iterations {
            if self.basis.len() >= self.nev {
                let ritz = self.rayleigh_ritz();
                let vectors: Vec<Vec<f64>> = (0..self.nev).map(|i| self.ritz_vector(ritz.coeffs.column(i))).collect();
                let residuals: Vec<f64> = (0..self.nev).map(|i| self.residual(ritz.values[i], &vectors[i])).collect();
                worst = residuals.iter().copied().fold(0.0, f64::max);
                if worst <= self.tol {
                    log::debug!("eigensolver converged after {iteration} block steps, basis {}", self.basis.len());
                    return Ok(vectors
                        .into_iter()
                        .zip(&ritz.values)
                        .map(|(mut vector, &value)| {
                            fix_sign(&mut vector);
                            EigenPair { value, vector }
                        })
                        .collect());
                }
                if self.basis.len() + self.block > self.cap {
                    last = self.restart(&ritz, &residuals);
                    continue;
                }
            }
            let next: Vec<Vec<f64>> = last.iter().map(|&j| self.shift_invert(&self.basis[j])).collect();
            last = self.append_block(next);
            if last.is_empty() {
                let w: Vec<Vec<f64>> = (0..self.block).map(|_| self.random_vector()).collect();
                last = self.append_block(w);
            }
        }
        Err(Error::NotConverged(format!(
            "{} eigenpairs not converged after {} block steps; worst relative residual {worst:.3e}",
            self.nev, self.max_iterations
        )))
    }

    /// Keeps the leading Ritz vectors and continues from the worst-converged
    /// wanted ones. Returns the indices of the new expansion block.
    fn restart(&mut self, ritz: &Ritz, residuals: &[f64]) -> Vec<usize> {
        let keep = (self.nev + self.block).min(ritz.values.len());
        let kept: Vec<Vec<f64>> = (0..keep).map(|i| self.ritz_vector(ritz.coeffs.column(i))).collect();
        self.basis = kept;
        self.h = DMatrix::from_diagonal(&DVector::from_iterator(keep, ritz.values[..keep].iter().copied()));
        let mut order: Vec<usize> = (0..self.nev).collect();
        order.sort_by(|&a, &b| residuals[b].total_cmp(&residuals[a]));
        let seeds: Vec<Vec<f64>> = order
            .iter()
            .take(self.block)
            .map(|&i| self.shift_invert(&self.basis[i]))
            .collect();
        self.append_block(seeds)
    }
}

/// Splits ascending `values` into maximal runs whose consecutive relative gaps
/// (λ_{i+1} − λ_i)/λ_{i+1} stay below `rel_gap_tol`.
pub fn detect_cluster(values: &[f64], rel_gap_tol: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let (a, b) = (values[i - 1], values[i]);
            (b - a) / b.abs().max(f64::MIN_POSITIVE) >= rel_gap_tol
        };
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Discrete eigenvalue cluster with full-length (constrained dofs included)
/// coefficient vectors.
#[derive(Clone, Debug)]
pub struct EigenCluster {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// 1-based position among the ascending clusters.
    pub cluster_index: usize,
    /// Global index of the first member (k₀).
    pub first: usize,
}

impl EigenCluster {
    pub fn from_pairs(space: &FeSpace, pairs: &[EigenPair], range: Range<usize>, cluster_index: usize) -> Self {
        Self {
            values: pairs[range.clone()].iter().map(|p| p.value).collect(),
            vectors: pairs[range.clone()].iter().map(|p| space.extend(&p.vector)).collect(),
            cluster_index,
            first: range.start,
        }
    }

    pub fn q(&self) -> usize {
        self.vectors.len()
    }

    /// Basis vectors·Q for a q×q orthogonal `q_mat`; member values become the
    /// Rayleigh quotients of the new vectors.
    pub fn recombine(&self, q_mat: &DMatrix<f64>, space: &FeSpace, coeffs: &Coefficients) -> Result<Self> {
        let q = self.q();
        if q_mat.nrows() != q || q_mat.ncols() != q {
            return Err(Error::DimensionMismatch(format!("{}×{} recombination of a cluster of size {q}", q_mat.nrows(), q_mat.ncols())));
        }
        let mut vectors = Vec::with_capacity(q);
        let mut values = Vec::with_capacity(q);
        for c in 0..q {
            let mut v = vec![0.0; self.vectors[0].len()];
            for r in 0..q {
                axpy(q_mat[(r, c)], &self.vectors[r], &mut v);
            }
            let a = energy_norm(space, coeffs, &v)?;
            let b = b_norm(space, &v)?;
            values.push(a * a / (b * b));
            vectors.push(v);
        }
        Ok(Self {
            values,
            vectors,
            cluster_index: self.cluster_index,
            first: self.first,
        })
    }
}
