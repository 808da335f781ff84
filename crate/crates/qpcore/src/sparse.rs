//! Compressed sparse column matrices.

use crate::QpError;

/// A sparse matrix in compressed sparse column form.
///
/// Row indices within each column are strictly increasing and duplicates are
/// never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries before compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Grow the matrix shape; existing entries are kept.
    pub fn resize(&mut self, nrows: usize, ncols: usize) {
        self.nrows = self.nrows.max(nrows);
        self.ncols = self.ncols.max(ncols);
    }

    /// Add `value` at `(row, col)`. Repeated positions are summed.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.nrows && col < self.ncols, "entry ({row}, {col}) outside {}x{}", self.nrows, self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn build(&self) -> CscMatrix {
        CscMatrix::from_triplets(self.nrows, self.ncols, &self.entries)
    }
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, colptr: vec![0; ncols + 1], rowind: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, colptr: (0..=n).collect(), rowind: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self { nrows: n, ncols: n, colptr: (0..=n).collect(), rowind: (0..n).collect(), values: diag.to_vec() }
    }

    /// Compress triplets, summing duplicates. Explicit zeros are kept so the
    /// sparsity pattern is independent of the numerical values.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; ncols + 1];
        for &(r, c, _) in entries {
            debug_assert!(r < nrows && c < ncols);
            counts[c + 1] += 1;
        }
        for c in 0..ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        for &(r, c, v) in entries {
            let k = next[c];
            rows[k] = r;
            vals[k] = v;
            next[c] += 1;
        }

        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowind = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        colptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for c in 0..ncols {
            order.clear();
            order.extend(counts[c]..counts[c + 1]);
            order.sort_by_key(|&k| rows[k]);
            let mut last: Option<usize> = None;
            for &k in &order {
                if last == Some(rows[k]) {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    rowind.push(rows[k]);
                    values.push(vals[k]);
                    last = Some(rows[k]);
                }
            }
            colptr.push(rowind.len());
        }
        Self { nrows, ncols, colptr, rowind, values }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense matrix");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] += v;
        }
        d
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    /// Iterate over stored `(row, col, value)` entries in column order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols)
            .flat_map(move |c| (self.colptr[c]..self.colptr[c + 1]).map(move |k| (self.rowind[k], c, self.values[k])))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.colptr[col]..self.colptr[col + 1];
        match self.rowind[range.clone()].binary_search(&row) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowind[k]] += self.values[k] * xc;
            }
        }
    }

    /// `y = Aᵀ x`
    pub fn mul_t_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.mul_t_vec_into(x, &mut y);
        y
    }

    pub fn mul_t_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for k in self.colptr[c]..self.colptr[c + 1] {
                acc += self.values[k] * x[self.rowind[k]];
            }
            y[c] = acc;
        }
    }

    pub fn transpose(&self) -> CscMatrix {
        let t: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        CscMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Entries on or above the diagonal.
    pub fn upper_triangle(&self) -> CscMatrix {
        let t: Vec<_> = self.iter().filter(|&(r, c, _)| r <= c).collect();
        CscMatrix::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Largest absolute asymmetry `|A_ij - A_ji|`, or infinity for non-square input.
    pub fn max_asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for (r, c, v) in self.iter() {
            worst = worst.max((v - t.get(r, c)).abs());
        }
        for (r, c, v) in t.iter() {
            worst = worst.max((v - self.get(r, c)).abs());
        }
        worst
    }

    /// `xᵀ A x` for square `A`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        dot(x, &ax)
    }

    pub fn col_inf_norms(&self) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| self.values[self.colptr[c]..self.colptr[c + 1]].iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut norms = vec![0.0f64; self.nrows];
        for (r, _, v) in self.iter() {
            norms[r] = norms[r].max(v.abs());
        }
        norms
    }

    /// Replace `A` with `diag(left) A diag(right)`.
    pub fn scale(&mut self, left: &[f64], right: &[f64]) {
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                self.values[k] *= left[self.rowind[k]] * right[c];
            }
        }
    }

    /// Stack rows: `[self; other]`.
    pub fn vstack(&self, other: &CscMatrix) -> Result<CscMatrix, QpError> {
        if self.ncols != other.ncols {
            return Err(QpError::Dimension(format!("vstack column mismatch {} vs {}", self.ncols, other.ncols)));
        }
        let mut t: Vec<_> = self.iter().collect();
        t.extend(other.iter().map(|(r, c, v)| (r + self.nrows, c, v)));
        Ok(CscMatrix::from_triplets(self.nrows + other.nrows, self.ncols, &t))
    }

    /// Keep only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> CscMatrix {
        let mut map = vec![usize::MAX; self.nrows];
        for (new, &old) in rows.iter().enumerate() {
            map[old] = new;
        }
        let t: Vec<_> = self.iter().filter(|&(r, _, _)| map[r] != usize::MAX).map(|(r, c, v)| (map[r], c, v)).collect();
        CscMatrix::from_triplets(rows.len(), self.ncols, &t)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
