//! Sparse matrix with both row and column access over one value buffer.
//!
//! Rows are the primary (CSR) layout; a precomputed transpose index gives
//! column iteration over the *same* stored values, so row and column views
//! always see identical floating-point numbers. Cyclic solvers consume column
//! blocks, finite-sum solvers consume rows.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SparseError {
    #[error("row {row}: column index {col} out of bounds (d = {cols})")]
    ColumnOutOfBounds { row: usize, col: usize, cols: usize },
    #[error("row {row}: column indices must be strictly ascending")]
    NonAscendingRow { row: usize },
    #[error("value at row {row} is not finite")]
    NonFiniteValue { row: usize },
}

#[derive(Debug, Clone)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    // CSR
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    // transpose index: entry p of column c lives at values[csc_pos[p]]
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    csc_pos: Vec<usize>,
    row_norms_sq: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists with strictly ascending,
    /// in-bounds column indices.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self, SparseError> {
        let n = rows.len();
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (t, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(c, v) in row {
                if c >= cols {
                    return Err(SparseError::ColumnOutOfBounds { row: t, col: c, cols });
                }
                if let Some(p) = prev {
                    if c <= p {
                        return Err(SparseError::NonAscendingRow { row: t });
                    }
                }
                if !v.is_finite() {
                    return Err(SparseError::NonFiniteValue { row: t });
                }
                prev = Some(c);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self::from_csr_unchecked(n, cols, row_ptr, col_idx, values))
    }

    /// Dense constructor for tests and small synthetic instances; zeros are
    /// kept out of the nonzero structure.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let lists: Vec<Vec<(usize, f64)>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c, v))
                    .collect()
            })
            .collect();
        Self::from_rows(cols, &lists).expect("dense rows are structurally valid")
    }

    fn from_csr_unchecked(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        // counting sort of CSR entries by column
        let nnz = values.len();
        let mut col_counts = vec![0usize; cols + 1];
        for &c in &col_idx {
            col_counts[c + 1] += 1;
        }
        for c in 0..cols {
            col_counts[c + 1] += col_counts[c];
        }
        let col_ptr = col_counts.clone();
        let mut next = col_counts;
        let mut row_idx = vec![0usize; nnz];
        let mut csc_pos = vec![0usize; nnz];
        for t in 0..rows {
            for p in row_ptr[t]..row_ptr[t + 1] {
                let c = col_idx[p];
                let slot = next[c];
                row_idx[slot] = t;
                csc_pos[slot] = p;
                next[c] += 1;
            }
        }
        let row_norms_sq = (0..rows)
            .map(|t| values[row_ptr[t]..row_ptr[t + 1]].iter().map(|v| v * v).sum())
            .collect();
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            col_ptr,
            row_idx,
            csc_pos,
            row_norms_sq,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, t: usize) -> usize {
        self.row_ptr[t + 1] - self.row_ptr[t]
    }

    /// Nonzero count of the columns in `range`.
    pub fn cols_nnz(&self, range: Range<usize>) -> usize {
        self.col_ptr[range.end] - self.col_ptr[range.start]
    }

    /// `‖a_t‖²` for row `t`.
    pub fn row_norm_sq(&self, t: usize) -> f64 {
        self.row_norms_sq[t]
    }

    /// Row `t` as parallel slices of column indices and values.
    pub fn row(&self, t: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[t]..self.row_ptr[t + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Iterates `(row, value)` over column `c` via the transpose index.
    pub fn col(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.col_ptr[c]..self.col_ptr[c + 1])
            .map(move |p| (self.row_idx[p], self.values[self.csc_pos[p]]))
    }

    /// `⟨a_t, x⟩`.
    pub fn row_dot(&self, t: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(t);
        cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
    }

    /// `⟨a_t, w⟩` for the hybrid point that takes coordinates below `split`
    /// from `head` and the rest from `tail`, without materializing `w`.
    pub fn row_dot_split(&self, t: usize, head: &[f64], tail: &[f64], split: usize) -> f64 {
        let (cols, vals) = self.row(t);
        let mut acc = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * if c < split { head[c] } else { tail[c] };
        }
        acc
    }

    /// `out = A·x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for t in 0..self.rows {
            out[t] = self.row_dot(t, x);
        }
    }

    /// `out[c] = ⟨A[:,c], r⟩ · scale` for columns in `range`, other entries
    /// untouched. Column-order summation keeps block extraction bit-identical
    /// to the full transpose product.
    pub fn t_mul_vec_cols(&self, r: &[f64], range: Range<usize>, scale: f64, out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.rows);
        for c in range {
            let mut acc = 0.0;
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.values[self.csc_pos[p]] * r[self.row_idx[p]];
            }
            out[c] = acc * scale;
        }
    }

    /// `out = scale · Aᵀ r`, summing in column order.
    pub fn t_mul_vec(&self, r: &[f64], scale: f64, out: &mut [f64]) {
        self.t_mul_vec_cols(r, 0..self.cols, scale, out);
    }

    /// Block-targeted transpose product with a lazily evaluated residual:
    /// `out[c − range.start] = scale · Σ_p value_p · residual(row_p)` over the
    /// columns in `range`. `residual` is invoked once per stored entry, so the
    /// cost is `O(nnz(columns in range))`.
    pub fn t_mul_residual_cols(
        &self,
        range: Range<usize>,
        scale: f64,
        residual: impl Fn(usize) -> f64,
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), range.len());
        let start = range.start;
        for c in range {
            let mut acc = 0.0;
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.values[self.csc_pos[p]] * residual(self.row_idx[p]);
            }
            out[c - start] = acc * scale;
        }
    }

    /// Block-targeted `out[c − range.start] = scale · ⟨A[:,c], r⟩`.
    pub fn t_mul_vec_cols_into_block(
        &self,
        r: &[f64],
        range: Range<usize>,
        scale: f64,
        out: &mut [f64],
    ) {
        self.t_mul_residual_cols(range, scale, |row| r[row], out);
    }

    /// Accumulating `out[c] += scale · ⟨A[:,c], r⟩` over columns in `range`.
    pub fn t_add_mul_vec_cols(&self, r: &[f64], range: Range<usize>, scale: f64, out: &mut [f64]) {
        for c in range {
            let mut acc = 0.0;
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.values[self.csc_pos[p]] * r[self.row_idx[p]];
            }
            out[c] += acc * scale;
        }
    }

    /// `out += A[:, range] · w` where `w` is indexed relative to the range.
    pub fn add_mul_block_cols(&self, w: &[f64], range: Range<usize>, out: &mut [f64]) {
        let start = range.start;
        for c in range {
            let xc = w[c - start];
            if xc == 0.0 {
                continue;
            }
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                out[self.row_idx[p]] += self.values[self.csc_pos[p]] * xc;
            }
        }
    }

    /// `out += A[:, range] · x[range]` (columns outside `range` ignored).
    pub fn add_mul_vec_cols(&self, x: &[f64], range: Range<usize>, out: &mut [f64]) {
        for c in range {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                out[self.row_idx[p]] += self.values[self.csc_pos[p]] * xc;
            }
        }
    }

    /// `out += A[:, range] · (new − old)[range]`, used for residual updates
    /// when one block of a hybrid point flips.
    pub fn add_mul_diff_cols(
        &self,
        new: &[f64],
        old: &[f64],
        range: Range<usize>,
        out: &mut [f64],
    ) {
        let start = range.start;
        for c in range {
            let delta = new[c - start] - old[c - start];
            if delta == 0.0 {
                continue;
            }
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                out[self.row_idx[p]] += self.values[self.csc_pos[p]] * delta;
            }
        }
    }

    /// Sum of all stored values via row iteration.
    pub fn sum_by_rows(&self) -> f64 {
        (0..self.rows)
            .map(|t| self.row(t).1.iter().sum::<f64>())
            .sum()
    }

    /// Sum of all stored values via column iteration.
    pub fn sum_by_cols(&self) -> f64 {
        (0..self.cols)
            .map(|c| self.col(c).map(|(_, v)| v).sum::<f64>())
            .sum()
    }

    /// Applies `f` to every stored value, preserving structure.
    pub fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> SparseMatrix {
        let mut values = Vec::with_capacity(self.nnz());
        for t in 0..self.rows {
            for p in self.row_ptr[t]..self.row_ptr[t + 1] {
                values.push(f(t, self.col_idx[p], self.values[p]));
            }
        }
        Self::from_csr_unchecked(
            self.rows,
            self.cols,
            self.row_ptr.clone(),
            self.col_idx.clone(),
            values,
        )
    }

    /// Per-column maximum absolute value (0 for empty columns).
    pub fn col_max_abs(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.cols];
        for c in 0..self.cols {
            for (_, v) in self.col(c) {
                out[c] = out[c].max(v.abs());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> SparseMatrix {
        SparseMatrix::from_rows(
            4,
            &[
                vec![(0, 1.0), (2, -2.0)],
                vec![],
                vec![(1, 3.5), (2, 0.5), (3, -1.0)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn shape_and_counts() {
        let m = sample();
        assert_eq!((m.n_rows(), m.n_cols(), m.nnz()), (3, 4, 5));
        assert_eq!(m.row_nnz(1), 0);
        assert_eq!(m.cols_nnz(1..3), 3);
        assert_eq!(m.row_norm_sq(0), 5.0);
    }

    #[test]
    fn rejects_bad_rows() {
        assert_eq!(
            SparseMatrix::from_rows(2, &[vec![(2, 1.0)]]).unwrap_err(),
            SparseError::ColumnOutOfBounds { row: 0, col: 2, cols: 2 }
        );
        assert_eq!(
            SparseMatrix::from_rows(3, &[vec![(1, 1.0), (1, 2.0)]]).unwrap_err(),
            SparseError::NonAscendingRow { row: 0 }
        );
    }

    #[test]
    fn column_view_matches_rows() {
        let m = sample();
        let got: Vec<(usize, f64)> = m.col(2).collect();
        assert_eq!(got, vec![(0, -2.0), (2, 0.5)]);
    }

    #[test]
    fn matvec_and_transpose() {
        let m = sample();
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut r = vec![0.0; 3];
        m.mul_vec(&x, &mut r);
        assert_eq!(r, vec![-5.0, 0.0, 4.5]);
        let mut g = vec![0.0; 4];
        m.t_mul_vec(&r, 1.0, &mut g);
        assert_eq!(g, vec![-5.0, 15.75, 12.25, -4.5]);
    }

    #[test]
    fn block_column_update_matches_full_recompute() {
        let m = sample();
        let old = [1.0, 2.0, 3.0, 4.0];
        let mut new = old;
        new[1] = -1.0;
        new[2] = 0.0;
        let mut r = vec![0.0; 3];
        m.mul_vec(&old, &mut r);
        m.add_mul_diff_cols(&new[1..3], &old[1..3], 1..3, &mut r);
        let mut fresh = vec![0.0; 3];
        m.mul_vec(&new, &mut fresh);
        for (a, b) in r.iter().zip(&fresh) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn row_dot_split_matches_materialized_hybrid() {
        let m = sample();
        let head = [1.0, 1.0, 1.0, 1.0];
        let tail = [0.0, -2.0, 3.0, 5.0];
        for split in 0..=4 {
            let hybrid: Vec<f64> = (0..4)
                .map(|c| if c < split { head[c] } else { tail[c] })
                .collect();
            for t in 0..3 {
                assert_eq!(m.row_dot_split(t, &head, &tail, split), m.row_dot(t, &hybrid));
            }
        }
    }

    proptest! {
        // Dual-view consistency: the same stored values, reordered.
        #[test]
        fn row_and_column_sums_agree(rows in proptest::collection::vec(
            proptest::collection::vec(-100.0f64..100.0, 0..8), 1..8))
        {
            let dense: Vec<Vec<f64>> = rows;
            let m = SparseMatrix::from_dense(&dense);
            let by_rows = m.sum_by_rows();
            let by_cols = m.sum_by_cols();
            let scale = 1.0f64.max(by_rows.abs());
            prop_assert!((by_rows - by_cols).abs() <= 1e-12 * scale);
        }
    }
}
