//! Row-major dense matrices and the GEMM kernels used by the apply chain.

use std::ops::{Index, IndexMut};

use super::scalar::{Precision, Real};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMat<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat {
            rows,
            cols,
            data: vec![T::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "dense data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(DenseMat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMat { rows, cols, data }
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn cast<U: Real>(&self) -> DenseMat<U> {
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let x = v.to_f64();
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `self * other`
    pub fn matmul(&self, other: &DenseMat<T>) -> Result<DenseMat<T>> {
        if self.cols != other.rows {
            return Err(Error::contract(format!(
                "matmul shape mismatch: {:?} x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut c = DenseMat::zeros(self.rows, other.cols);
        gemm(
            Op::N,
            Op::N,
            self.rows,
            other.cols,
            self.cols,
            &self.data,
            &other.data,
            &mut c.data,
            Accum::Overwrite,
        );
        Ok(c)
    }

    /// Matrix-vector product with `f64` accumulation.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::contract(format!(
                "matvec: x has length {}, matrix has {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a.to_f64() * b)
                    .sum()
            })
            .collect())
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry magnitude.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut scale = 0.0f64;
        let mut diff = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j].to_f64();
                scale = scale.max(a.abs());
                if j > i {
                    diff = diff.max((a - self.data[j * n + i].to_f64()).abs());
                }
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> Index<(usize, usize)> for DenseMat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Whether an operand enters a product as stored or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Accum {
    Overwrite,
    Add,
}

#[inline]
fn lane_dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::ZERO; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let o = c * 8;
        for l in 0..8 {
            acc[l] += a[o + l] * b[o + l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for i in chunks * 8..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy_row<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `C (m x n) (+)= op(A) op(B)` on tightly packed row-major buffers.
///
/// `A` is stored `m x k` for `Op::N` and `k x m` for `Op::T`; `B` is stored
/// `k x n` for `Op::N` and `n x k` for `Op::T`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    op_a: Op,
    op_b: Op,
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accum: Accum,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if accum == Accum::Overwrite {
        c.fill(T::ZERO);
    }
    match (op_a, op_b) {
        (Op::N, Op::N) => block_nn(m, n, k, |i, p| a[i * k + p], b, c),
        (Op::T, Op::N) => block_nn(m, n, k, |i, p| a[p * m + i], b, c),
        (Op::N, Op::T) => block_nt(m, n, k, a, b, c),
        (Op::T, Op::T) => {
            for i in 0..m {
                for j in 0..n {
                    let mut s = T::ZERO;
                    for p in 0..k {
                        s += a[p * m + i] * b[j * k + p];
                    }
                    c[i * n + j] += s;
                }
            }
        }
    }
}

const MR: usize = 4;
const NR: usize = 4;

// 4x4 register tiles over row-major B; `at(i, p)` reads op(A).
#[inline(always)]
fn block_nn<T: Real>(m: usize, n: usize, k: usize, at: impl Fn(usize, usize) -> T, b: &[T], c: &mut [T]) {
    let mut i = 0;
    while i + MR <= m {
        let mut j = 0;
        while j + NR <= n {
            let mut acc = [[T::ZERO; NR]; MR];
            for p in 0..k {
                let bp = &b[p * n + j..p * n + j + NR];
                for r in 0..MR {
                    let ar = at(i + r, p);
                    for q in 0..NR {
                        acc[r][q] += ar * bp[q];
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                let o = (i + r) * n + j;
                for q in 0..NR {
                    c[o + q] += row[q];
                }
            }
            j += NR;
        }
        for jj in j..n {
            for r in 0..MR {
                let mut s = T::ZERO;
                for p in 0..k {
                    s += at(i + r, p) * b[p * n + jj];
                }
                c[(i + r) * n + jj] += s;
            }
        }
        i += MR;
    }
    for ii in i..m {
        let crow = &mut c[ii * n..(ii + 1) * n];
        for p in 0..k {
            axpy_row(at(ii, p), &b[p * n..(p + 1) * n], crow);
        }
    }
}

// 2x2 output tiles of dot products, four lanes along the shared dimension.
fn block_nt<T: Real>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    const W: usize = 4;
    let kw = k / W * W;
    let mut i = 0;
    while i + 2 <= m {
        let (a0, a1) = (&a[i * k..(i + 1) * k], &a[(i + 1) * k..(i + 2) * k]);
        let mut j = 0;
        while j + 2 <= n {
            let (b0, b1) = (&b[j * k..(j + 1) * k], &b[(j + 1) * k..(j + 2) * k]);
            let mut acc = [[T::ZERO; W]; 4];
            let mut p = 0;
            while p < kw {
                for l in 0..W {
                    let (x0, x1, y0, y1) = (a0[p + l], a1[p + l], b0[p + l], b1[p + l]);
                    acc[0][l] += x0 * y0;
                    acc[1][l] += x0 * y1;
                    acc[2][l] += x1 * y0;
                    acc[3][l] += x1 * y1;
                }
                p += W;
            }
            let mut s = acc.map(|v| (v[0] + v[1]) + (v[2] + v[3]));
            for p in kw..k {
                s[0] += a0[p] * b0[p];
                s[1] += a0[p] * b1[p];
                s[2] += a1[p] * b0[p];
                s[3] += a1[p] * b1[p];
            }
            c[i * n + j] += s[0];
            c[i * n + j + 1] += s[1];
            c[(i + 1) * n + j] += s[2];
            c[(i + 1) * n + j + 1] += s[3];
            j += 2;
        }
        if j < n {
            let bj = &b[j * k..(j + 1) * k];
            c[i * n + j] += lane_dot(a0, bj);
            c[(i + 1) * n + j] += lane_dot(a1, bj);
        }
        i += 2;
    }
    if i < m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += lane_dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// Same contract as [`gemm`] but every output element is accumulated in `f64`
/// before rounding back to `T`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_acc64<T: Real>(
    op_a: Op,
    op_b: Op,
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accum: Accum,
) {
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0f64;
            for p in 0..k {
                let aip = match op_a {
                    Op::N => a[i * k + p],
                    Op::T => a[p * m + i],
                };
                let bpj = match op_b {
                    Op::N => b[p * n + j],
                    Op::T => b[j * k + p],
                };
                s += aip.to_f64() * bpj.to_f64();
            }
            let out = &mut c[i * n + j];
            *out = match accum {
                Accum::Overwrite => T::from_f64(s),
                Accum::Add => T::from_f64(out.to_f64() + s),
            };
        }
    }
}

/// Per-element products `op_a(A_i) op_b(X_i)` over a batch of equally shaped pairs.
///
/// With `acc64` set, each output element is accumulated in double precision.
pub fn batched_gemm<T: Real>(
    exec: Exec,
    batch: &[(&DenseMat<T>, &DenseMat<T>)],
    op_a: Op,
    op_b: Op,
    acc64: bool,
) -> Result<Vec<DenseMat<T>>> {
    let Some((a0, b0)) = batch.first() else {
        return Ok(Vec::new());
    };
    let (a_shape, b_shape) = (a0.shape(), b0.shape());
    if let Some(i) = batch
        .iter()
        .position(|(a, b)| a.shape() != a_shape || b.shape() != b_shape)
    {
        return Err(Error::contract(format!(
            "batched_gemm: element {i} has shapes {:?}/{:?}, expected {a_shape:?}/{b_shape:?}",
            batch[i].0.shape(),
            batch[i].1.shape()
        )));
    }
    let (m, ka) = match op_a {
        Op::N => a_shape,
        Op::T => (a_shape.1, a_shape.0),
    };
    let (kb, n) = match op_b {
        Op::N => b_shape,
        Op::T => (b_shape.1, b_shape.0),
    };
    if ka != kb {
        return Err(Error::contract(format!(
            "batched_gemm: inner dimensions {ka} and {kb} differ"
        )));
    }
    let mut out = vec![T::ZERO; batch.len() * m * n];
    par::for_each_chunk(exec, &mut out, (m * n).max(1), |i, c| {
        let (a, b) = batch[i];
        if acc64 {
            gemm_acc64(op_a, op_b, m, n, ka, &a.data, &b.data, c, Accum::Overwrite);
        } else {
            gemm(op_a, op_b, m, n, ka, &a.data, &b.data, c, Accum::Overwrite);
        }
    });
    Ok(out
        .chunks(m * n.max(1))
        .take(batch.len())
        .map(|c| DenseMat::from_vec(m, n, c.to_vec()).expect("shape computed above"))
        .collect())
}
