//! Up-looking sparse Cholesky factorization P A Pᵀ = L Lᵀ.

use super::{approximate_minimum_degree, SparseSym};
use crate::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct SparseCholesky {
    n: usize,
    /// perm[k] = original index of row/column k of the factor
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Upper triangle of P A Pᵀ in compressed-column form.
struct UpperCsc {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

fn permuted_upper(a: &SparseSym, pinv: &[usize]) -> UpperCsc {
    let n = a.dim();
    let mut count = vec![0usize; n + 1];
    for i in 0..n {
        for &j in a.row(i).0 {
            let (pi, pj) = (pinv[i], pinv[j]);
            if pi <= pj {
                count[pj + 1] += 1;
            }
        }
    }
    for k in 0..n {
        count[k + 1] += count[k];
    }
    let col_ptr = count.clone();
    let mut next = count;
    let mut row_idx = vec![0; col_ptr[n]];
    let mut values = vec![0.0; col_ptr[n]];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let (pi, pj) = (pinv[i], pinv[j]);
            if pi <= pj {
                let slot = next[pj];
                row_idx[slot] = pi;
                values[slot] = v;
                next[pj] += 1;
            }
        }
    }
    UpperCsc {
        col_ptr,
        row_idx,
        values,
    }
}

fn elimination_tree(c: &UpperCsc, n: usize) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &row in &c.row_idx[c.col_ptr[k]..c.col_ptr[k + 1]] {
            let mut i = row;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row k of L (excluding the diagonal) in topological order,
/// written to `stack[top..]`. Returns `top`.
fn row_pattern(c: &UpperCsc, k: usize, parent: &[usize], stack: &mut [usize], flag: &mut [usize]) -> usize {
    let n = stack.len();
    let mut top = n;
    flag[k] = k;
    for &row in &c.row_idx[c.col_ptr[k]..c.col_ptr[k + 1]] {
        let mut i = row;
        if i > k {
            continue;
        }
        let mut len = 0;
        while flag[i] != k {
            stack[len] = i;
            len += 1;
            flag[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

impl SparseCholesky {
    /// Factors with an approximate-minimum-degree ordering.
    pub fn factor(a: &SparseSym) -> Result<Self> {
        let perm = approximate_minimum_degree(a);
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &SparseSym, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        if perm.len() != n {
            return Err(Error::DimensionMismatch(format!("ordering of length {} for dimension {n}", perm.len())));
        }
        let mut pinv = vec![NONE; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        let c = permuted_upper(a, &pinv);
        let parent = elimination_tree(&c, n);

        let mut stack = vec![0; n];
        let mut flag = vec![NONE; n];
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = row_pattern(&c, k, &parent, &mut stack, &mut flag);
            for &j in &stack[top..] {
                counts[j] += 1;
            }
        }
        let mut col_ptr = vec![0; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + counts[k];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0; nnz];
        let mut values = vec![0.0; nnz];
        let mut next: Vec<usize> = col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        flag.fill(NONE);

        for k in 0..n {
            let top = row_pattern(&c, k, &parent, &mut stack, &mut flag);
            for p in c.col_ptr[k]..c.col_ptr[k + 1] {
                x[c.row_idx[p]] = c.values[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..next[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: perm[k], value: d });
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k;
            values[p] = d.sqrt();
        }

        Ok(Self {
            n,
            perm,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..self.n {
            let start = self.col_ptr[j];
            y[j] /= self.values[start];
            let yj = y[j];
            for p in start + 1..self.col_ptr[j + 1] {
                y[self.row_idx[p]] -= self.values[p] * yj;
            }
        }
        for j in (0..self.n).rev() {
            let start = self.col_ptr[j];
            let mut s = y[j];
            for p in start + 1..self.col_ptr[j + 1] {
                s -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = s / self.values[start];
        }
        let mut x = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}
