//! Singular values by one-sided (Hestenes) Jacobi.
//!
//! One-sided Jacobi keeps small singular values accurate relative to the
//! largest one, which the rank audit relies on at tight tolerances.

use super::dense::DenseMat;
use super::eig::sym_eigvals;
use crate::error::{Error, Result};

/// Descending singular values of `block`.
pub fn singular_values(block: &DenseMat<f64>) -> Result<Vec<f64>> {
    if !block.all_finite() {
        return Err(Error::Numerical("singular_values: non-finite input".into()));
    }
    let (m, n) = block.shape();
    if m == 0 || n == 0 {
        return Ok(vec![]);
    }
    // Work on the columns of the taller orientation, stored as contiguous rows.
    let (len, count, mut cols) = if m >= n {
        (m, n, block.transpose().into_vec())
    } else {
        (n, m, block.as_slice().to_vec())
    };
    let tol = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..count {
            for q in p + 1..count {
                let (lo, hi) = cols.split_at_mut(q * len);
                let cp = &mut lo[p * len..(p + 1) * len];
                let cq = &mut hi[..len];
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for k in 0..len {
                    alpha += cp[k] * cp[k];
                    beta += cq[k] * cq[k];
                    gamma += cp[k] * cq[k];
                }
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..len {
                    let (x, y) = (cp[k], cq[k]);
                    cp[k] = c * x - s * y;
                    cq[k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols
        .chunks(len)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Singular values as square roots of the eigenvalues of `BᵀB`. Loses
/// relative accuracy in the small values; used as an independent check.
pub fn singular_values_gram(block: &DenseMat<f64>) -> Result<Vec<f64>> {
    let g = block.transpose().matmul(block)?;
    let mut g = g;
    let n = g.rows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = avg;
            g[(j, i)] = avg;
        }
    }
    let mut v: Vec<f64> = sym_eigvals(&g)?.into_iter().map(|x| x.max(0.0).sqrt()).collect();
    v.reverse();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_block() {
        let z = DenseMat::<f64>::zeros(4, 3);
        assert_eq!(singular_values(&z).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn rank_one() {
        let u = [1.0, 2.0, 2.0];
        let v = [3.0, 4.0];
        let b = DenseMat::from_fn(3, 2, |i, j| u[i] * v[j]);
        let s = singular_values(&b).unwrap();
        assert!((s[0] - 15.0).abs() < 1e-12);
        assert!(s[1].abs() < 1e-12);
    }

    #[test]
    fn wide_matches_tall() {
        let b = DenseMat::from_fn(3, 5, |i, j| ((i * 5 + j) as f64).cos());
        let s1 = singular_values(&b).unwrap();
        let s2 = singular_values(&b.transpose()).unwrap();
        for (x, y) in s1.iter().zip(&s2) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
