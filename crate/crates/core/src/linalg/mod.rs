//! Dense and sparse kernels shared by every other module.

pub mod chol;
pub mod csr;
pub mod dense;
pub mod eig;
pub mod morton;
pub mod rng;
pub mod scalar;
pub mod svd;

pub use chol::{cholesky, spd_inverse};
pub use csr::CsrMatrix;
pub use dense::{batched_gemm, gemm, Accum, DenseMat, Op};
pub use eig::{sym_eig, sym_eig_with, sym_eigvals, EigOptions, SymEig};
pub use morton::{morton_decode, morton_encode};
pub use rng::{Purpose, RngStream};
pub use scalar::{Precision, Real};
pub use svd::singular_values;

/// Default cap on the dimension of any dense eigen/assembly path.
pub const DENSE_CAP: usize = 4096;

/// Dot product with an `f64` accumulator.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
