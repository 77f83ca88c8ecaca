//! Dense Cholesky factorization for small SPD systems.

use super::dense::{gemm, Accum, DenseMat, Op};
use super::{dot, DENSE_CAP};
use crate::error::{Error, Result};

/// Lower-triangular `L` with `A = L Lᵀ`. Only the lower triangle of `a` is read.
pub fn cholesky(a: &DenseMat<f64>) -> Result<DenseMat<f64>> {
    let (n, m) = a.shape();
    if n != m {
        return Err(Error::contract(format!("cholesky needs a square matrix, got {n}x{m}")));
    }
    if n > DENSE_CAP {
        return Err(Error::config(format!("dense factorization refused: N = {n} > cap {DENSE_CAP}")));
    }
    let mut l = DenseMat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Numerical(format!(
                        "matrix is not positive definite (pivot {i} = {s:e})"
                    )));
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// `A^{-1}` for SPD `A` via `L^{-T} L^{-1}`.
pub fn spd_inverse(a: &DenseMat<f64>) -> Result<DenseMat<f64>> {
    let l = cholesky(a)?;
    let n = l.rows();
    let mut w = DenseMat::zeros(n, n);
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        for k in 0..i {
            let lik = l[(i, k)];
            if lik != 0.0 {
                for (r, wk) in row[..=k].iter_mut().zip(&w.row(k)[..=k]) {
                    *r -= lik * wk;
                }
            }
        }
        let inv = 1.0 / l[(i, i)];
        for (dst, r) in w.row_mut(i)[..=i].iter_mut().zip(&row[..=i]) {
            *dst = r * inv;
        }
    }
    let mut out = DenseMat::zeros(n, n);
    gemm(Op::T, Op::N, n, n, n, w.as_slice(), w.as_slice(), out.as_mut_slice(), Accum::Overwrite);
    // symmetric by construction up to rounding
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DenseMat<f64> {
        let b = DenseMat::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64 * 0.31).sin());
        let mut a = b.matmul(&b.transpose()).unwrap();
        for i in 0..n {
            a[(i, i)] += n as f64;
        }
        a
    }

    #[test]
    fn factor_reproduces_matrix() {
        let a = spd(9);
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
            for j in i + 1..9 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = spd(12);
        let inv = spd_inverse(&a).unwrap();
        let p = a.matmul(&inv).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = DenseMat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::Numerical(_))));
    }
}
