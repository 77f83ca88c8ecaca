//! Compressed-sparse-row matrices with `f64` storage.

use super::dense::DenseMat;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix after checking the CSR invariants.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = t.iter().find(|(i, j, _)| *i >= n_rows || *j >= n_cols) {
            return Err(Error::contract(format!(
                "triplet ({i},{j}) outside {n_rows}x{n_cols}"
            )));
        }
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices: Vec<u32> = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry pushed for last key") += v;
                continue;
            }
            last = Some((i, j));
            row_offsets[i + 1] += 1;
            col_indices.push(j as u32);
            values.push(v);
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn from_dense(a: &DenseMat<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.rows(), a.cols(), t).expect("dense indices are in bounds")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::contract(msg));
        if self.row_offsets.len() != self.n_rows + 1 {
            return bad(format!(
                "row_offsets has length {}, expected {}",
                self.row_offsets.len(),
                self.n_rows + 1
            ));
        }
        if self.row_offsets[0] != 0 {
            return bad("row_offsets must start at 0".into());
        }
        if self.col_indices.len() != self.values.len() {
            return bad("col_indices and values differ in length".into());
        }
        if *self.row_offsets.last().expect("nonempty") != self.values.len() {
            return bad("last row offset != nnz".into());
        }
        if self.n_cols > u32::MAX as usize {
            return bad("column count exceeds u32 index range".into());
        }
        for i in 0..self.n_rows {
            let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if e < s {
                return bad(format!("row_offsets decrease at row {i}"));
            }
            let cols = &self.col_indices[s..e];
            if cols.iter().any(|&c| c as usize >= self.n_cols) {
                return bad(format!("column index out of bounds in row {i}"));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("column indices not strictly increasing in row {i}"));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values rounded to single precision.
    pub fn values_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest `|A_ij - A_ji|`, or infinity when the pattern is not symmetric.
    pub fn max_asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let (tc, tv) = self.row(j as usize);
                match tc.binary_search(&(i as u32)) {
                    Ok(p) => worst = worst.max((v - tv[p]).abs()),
                    Err(_) => return f64::INFINITY,
                }
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DenseMat<f64> {
        let mut d = DenseMat::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j as usize)] = v;
            }
        }
        d
    }

    fn check_len(&self, x: usize, y: usize) -> Result<()> {
        if x != self.n_cols || y != self.n_rows {
            return Err(Error::contract(format!(
                "spmv: matrix is {}x{}, x has {x}, y has {y}",
                self.n_rows, self.n_cols
            )));
        }
        Ok(())
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(Exec::Sequential, x, &mut y)?;
        Ok(y)
    }

    /// `y = A x` with `f64` accumulation in column order.
    pub fn spmv_into(&self, exec: Exec, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_len(x.len(), y.len())?;
        const ROWS: usize = 256;
        par::for_each_chunk(exec, y, ROWS, |c, ys| {
            for (r, yi) in ys.iter_mut().enumerate() {
                let (cols, vals) = self.row(c * ROWS + r);
                let mut s = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    s += v * x[j as usize];
                }
                *yi = s;
            }
        });
        Ok(())
    }

    /// `Y = A X` for row-major `X` with `ncols` columns.
    pub fn spmm_into(&self, exec: Exec, x: &[f64], ncols: usize, y: &mut [f64]) -> Result<()> {
        if ncols == 0 {
            return Ok(());
        }
        self.check_len(x.len() / ncols, y.len() / ncols)?;
        if !x.len().is_multiple_of(ncols) || !y.len().is_multiple_of(ncols) {
            return Err(Error::contract("spmm: buffer length not a multiple of ncols"));
        }
        const ROWS: usize = 32;
        par::for_each_chunk(exec, y, ROWS * ncols, |c, ys| {
            for (r, yrow) in ys.chunks_mut(ncols).enumerate() {
                yrow.fill(0.0);
                let (cols, vals) = self.row(c * ROWS + r);
                for (&j, &v) in cols.iter().zip(vals) {
                    let xrow = &x[j as usize * ncols..(j as usize + 1) * ncols];
                    for (yv, xv) in yrow.iter_mut().zip(xrow) {
                        *yv += v * xv;
                    }
                }
            }
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_columns() {
        let r = CsrMatrix::new(2, 2, vec![0, 2, 3], vec![1, 0, 1], vec![1.0, 2.0, 3.0]);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 0.5)]).unwrap();
        assert_eq!(a.get(0, 0), 1.5);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn spmv_length_mismatch_is_contract_error() {
        let a = CsrMatrix::identity(3);
        assert!(matches!(a.spmv(&[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn spmm_matches_columnwise_spmv() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 2.0), (0, 2, -1.0), (1, 1, 3.0), (2, 0, -1.0), (2, 2, 4.0)],
        )
        .unwrap();
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut y = [0.0; 6];
        a.spmm_into(Exec::Parallel, &x, 2, &mut y).unwrap();
        let c0 = a.spmv(&[1.0, 3.0, 5.0]).unwrap();
        let c1 = a.spmv(&[2.0, 4.0, 6.0]).unwrap();
        for i in 0..3 {
            assert_eq!(y[2 * i], c0[i]);
            assert_eq!(y[2 * i + 1], c1[i]);
        }
    }
}
