//! Sparse LDLᵀ factorization for symmetric quasi-definite matrices.
//!
//! The symbolic phase (ordering, elimination tree, column counts) runs once
//! per sparsity pattern; numeric refactorization with new values reuses it.
//! No pivoting is performed, so the matrix must be quasi-definite (or
//! positive definite) under the chosen ordering.

use crate::ordering::{invert, minimum_degree};
use crate::sparse::CscMatrix;
use crate::QpError;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    /// Permuted upper-triangular pattern.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// Position in the permuted pattern of each entry of the input pattern.
    entry_map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    positive_pivots: usize,
    factored: bool,
    /// Expected pivot signs in elimination order plus (threshold, delta):
    /// a pivot whose signed value falls below the threshold is replaced by
    /// `sign * delta`.
    dynamic_reg: Option<(Vec<f64>, f64, f64)>,
}

impl LdlFactor {
    /// Symbolic analysis of the upper-triangular pattern `upper` (diagonal
    /// entries must be present).
    pub fn analyze(upper: &CscMatrix) -> Result<Self, QpError> {
        let n = upper.ncols;
        if upper.nrows != n {
            return Err(QpError::Dimension("LDL input must be square".into()));
        }
        for c in 0..n {
            let col = &upper.rowind[upper.colptr[c]..upper.colptr[c + 1]];
            if col.iter().any(|&r| r > c) {
                return Err(QpError::Dimension("LDL input must be upper triangular".into()));
            }
            if col.last() != Some(&c) {
                return Err(QpError::Dimension(format!("missing diagonal entry in column {c}")));
            }
        }

        let perm = minimum_degree(n, upper.iter().map(|(r, c, _)| (r, c)));
        let pinv = invert(&perm);

        // permuted upper pattern, remembering where each input entry lands
        let mut counts = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(upper.nnz());
        for (r, c, _) in upper.iter() {
            let (pr, pc) = (pinv[r], pinv[c]);
            let (row, col) = if pr <= pc { (pr, pc) } else { (pc, pr) };
            counts[col + 1] += 1;
            targets.push((row, col));
        }
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        let ap = counts.clone();
        let mut next = counts;
        let mut ai = vec![0usize; targets.len()];
        let mut entry_map = vec![0usize; targets.len()];
        for (k, &(row, col)) in targets.iter().enumerate() {
            let pos = next[col];
            ai[pos] = row;
            entry_map[k] = pos;
            next[col] += 1;
        }
        // sort rows within columns, carrying the entry map along
        let mut back = vec![0usize; targets.len()];
        for (k, &pos) in entry_map.iter().enumerate() {
            back[pos] = k;
        }
        for c in 0..n {
            let range = ap[c]..ap[c + 1];
            let mut items: Vec<(usize, usize)> = range.clone().map(|p| (ai[p], back[p])).collect();
            items.sort_unstable();
            for (off, (row, k)) in items.into_iter().enumerate() {
                ai[range.start + off] = row;
                entry_map[k] = range.start + off;
            }
        }

        // elimination tree and column counts
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in ap[j]..ap[j + 1] {
                let mut i = ai[p];
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        Ok(Self {
            n,
            perm,
            ap,
            ai,
            entry_map,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            positive_pivots: 0,
            factored: false,
            dynamic_reg: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Enable dynamic pivot regularization. `signs[i]` is the expected sign
    /// of the pivot for original index `i` (positive for primal, negative for
    /// dual blocks of a quasi-definite matrix).
    pub fn set_dynamic_regularization(&mut self, signs: &[f64], threshold: f64, delta: f64) {
        let permuted = self.perm.iter().map(|&p| signs[p].signum()).collect();
        self.dynamic_reg = Some((permuted, threshold, delta));
    }

    /// Number of strictly positive pivots in `D` from the last factorization.
    pub fn positive_pivots(&self) -> usize {
        self.positive_pivots
    }

    /// Numeric factorization. `values` follows the entry order of the pattern
    /// passed to [`LdlFactor::analyze`].
    pub fn factor(&mut self, values: &[f64]) -> Result<(), QpError> {
        let n = self.n;
        assert_eq!(values.len(), self.entry_map.len());
        let mut ax = vec![0.0; self.ai.len()];
        for (k, &pos) in self.entry_map.iter().enumerate() {
            ax[pos] += values[k];
        }

        let mut y_vals = vec![0.0; n];
        let mut y_marked = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        self.factored = false;
        self.positive_pivots = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let bidx = self.ai[p];
                if bidx == k {
                    self.d[k] = ax[p];
                    continue;
                }
                y_vals[bidx] = ax[p];
                if !y_marked[bidx] {
                    y_marked[bidx] = true;
                    elim[0] = bidx;
                    let mut nnz_e = 1;
                    let mut next = self.etree[bidx];
                    while next != NONE && next < k {
                        if y_marked[next] {
                            break;
                        }
                        y_marked[next] = true;
                        elim[nnz_e] = next;
                        nnz_e += 1;
                        next = self.etree[next];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        y_idx[nnz_y] = elim[nnz_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let space = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..space {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[space] = k;
                let l = yc * self.dinv[c];
                self.lx[space] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_marked[c] = false;
            }
            if let Some((signs, threshold, delta)) = &self.dynamic_reg {
                if self.d[k] * signs[k] <= *threshold {
                    self.d[k] = signs[k] * delta;
                }
            }
            let dk = self.d[k];
            if dk == 0.0 || !dk.is_finite() {
                return Err(QpError::Factorization(format!("zero pivot at step {k}")));
            }
            if dk > 0.0 {
                self.positive_pivots += 1;
            }
            self.dinv[k] = 1.0 / dk;
        }
        self.factored = true;
        Ok(())
    }

    /// Solve `K x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert!(self.factored);
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }
}

/// Symmetric product `y = K x` where `K` is given by its upper triangle.
pub fn sym_upper_mul(upper: &CscMatrix, values: &[f64], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..upper.ncols {
        for k in upper.colptr[c]..upper.colptr[c + 1] {
            let r = upper.rowind[k];
            let v = values[k];
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
    }
}
