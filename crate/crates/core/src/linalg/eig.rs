//! Dense symmetric eigensolvers.
//!
//! The production path is Householder tridiagonalization followed by implicit
//! QL with Wilkinson-type shifts. A cyclic Jacobi solver is kept for small
//! matrices and as an independent check.

use super::dense::DenseMat;
use super::DENSE_CAP;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SymEig {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`. Empty when only
    /// eigenvalues were requested.
    pub vectors: DenseMat<f64>,
}

impl SymEig {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.col(i)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EigOptions {
    pub vectors: bool,
    pub cap: usize,
    /// Relative asymmetry above which the input is rejected.
    pub symmetry_tol: f64,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            vectors: true,
            cap: DENSE_CAP,
            symmetry_tol: 1e-12,
        }
    }
}

pub fn sym_eig(a: &DenseMat<f64>) -> Result<SymEig> {
    sym_eig_with(a, EigOptions::default())
}

pub fn sym_eigvals(a: &DenseMat<f64>) -> Result<Vec<f64>> {
    Ok(sym_eig_with(
        a,
        EigOptions {
            vectors: false,
            ..EigOptions::default()
        },
    )?
    .values)
}

fn check_input(a: &DenseMat<f64>, opts: &EigOptions) -> Result<usize> {
    let (n, m) = a.shape();
    if n != m {
        return Err(Error::contract(format!("sym_eig: matrix is {n}x{m}")));
    }
    if n > opts.cap {
        return Err(Error::config(format!(
            "sym_eig: dimension {n} exceeds dense cap {}",
            opts.cap
        )));
    }
    if !a.all_finite() {
        return Err(Error::Numerical("sym_eig: non-finite input".into()));
    }
    let asym = a.asymmetry();
    if asym > opts.symmetry_tol {
        return Err(Error::contract(format!(
            "sym_eig: relative asymmetry {asym:.3e} exceeds {:.1e}",
            opts.symmetry_tol
        )));
    }
    Ok(n)
}

pub fn sym_eig_with(a: &DenseMat<f64>, opts: EigOptions) -> Result<SymEig> {
    let n = check_input(a, &opts)?;
    if n == 0 {
        return Ok(SymEig {
            values: vec![],
            vectors: DenseMat::zeros(0, 0),
        });
    }
    // `z` is addressed column-major (z[j*n + k] is entry (k, j)), so the
    // column sweeps below run over contiguous memory. The input is symmetric,
    // so its row-major buffer is also its column-major buffer.
    let mut z = a.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut z, &mut d, &mut e, opts.vectors);
    tql2(n, &mut z, &mut d, &mut e, opts.vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = if opts.vectors {
        let mut v = DenseMat::zeros(n, n);
        for (c, &src) in order.iter().enumerate() {
            let col = &z[src * n..(src + 1) * n];
            for (k, &x) in col.iter().enumerate() {
                v[(k, c)] = x;
            }
        }
        v
    } else {
        DenseMat::zeros(0, 0)
    };
    Ok(SymEig { values, vectors })
}

/// Householder reduction to tridiagonal form; `z` is column-major.
fn tred2(n: usize, z: &mut [f64], d: &mut [f64], e: &mut [f64], vectors: bool) {
    let idx = |row: usize, col: usize| col * n + row;
    for j in 0..n {
        d[j] = z[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = z[idx(i - 1, j)];
                z[idx(i, j)] = 0.0;
                z[idx(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);
            for j in 0..i {
                f = d[j];
                z[idx(j, i)] = f;
                let col = &z[j * n..j * n + i];
                g = e[j] + col[j] * f;
                for k in j + 1..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = &mut z[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = z[idx(i - 1, j)];
                z[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    if !vectors {
        for i in 0..n {
            d[i] = z[idx(i, i)];
        }
        e[0] = 0.0;
        return;
    }

    for i in 0..n - 1 {
        z[idx(n - 1, i)] = z[idx(i, i)];
        z[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = z[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let (lo, hi) = z.split_at_mut((i + 1) * n);
                let cj = &mut lo[j * n..j * n + i + 1];
                let ci = &hi[..i + 1];
                let mut g = 0.0;
                for k in 0..=i {
                    g += ci[k] * cj[k];
                }
                for k in 0..=i {
                    cj[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            z[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = z[idx(n - 1, j)];
        z[idx(n - 1, j)] = 0.0;
    }
    z[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal `(d, e)`; accumulates rotations into `z`.
fn tql2(n: usize, z: &mut [f64], d: &mut [f64], e: &mut [f64], vectors: bool) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    let max_iter = 60 * n.max(8);
    let mut iters = 0usize;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                iters += 1;
                if iters > max_iter {
                    return Err(Error::Numerical(
                        "sym_eig: QL iteration failed to converge".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if vectors {
                        let (lo, hi) = z.split_at_mut((i + 1) * n);
                        let zi = &mut lo[i * n..];
                        let zi1 = &mut hi[..n];
                        for k in 0..n {
                            let t = zi1[k];
                            zi1[k] = s * zi[k] + c * t;
                            zi[k] = c * zi[k] - s * t;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Cyclic Jacobi eigensolver. Slow (`O(n^3)` per sweep) but simple and
/// accurate; intended for small matrices and cross-checks.
pub fn jacobi_eig(a: &DenseMat<f64>) -> Result<SymEig> {
    let n = check_input(a, &EigOptions::default())?;
    let mut m = a.clone();
    let mut v = DenseMat::<f64>::identity(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * m.frobenius_norm().max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DenseMat::from_fn(n, n, |k, c| v[(k, order[c])]);
    Ok(SymEig { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let a = DenseMat::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn one_by_one_and_empty() {
        let a = DenseMat::from_vec(1, 1, vec![-4.0]).unwrap();
        assert_eq!(sym_eigvals(&a).unwrap(), vec![-4.0]);
        assert!(sym_eigvals(&DenseMat::zeros(0, 0)).unwrap().is_empty());
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DenseMat::from_vec(2, 2, vec![1.0, 2.0, 2.1, 1.0]).unwrap();
        assert!(matches!(sym_eig(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn respects_cap() {
        let a = DenseMat::<f64>::identity(5);
        let opts = EigOptions {
            cap: 4,
            ..EigOptions::default()
        };
        assert!(matches!(sym_eig_with(&a, opts), Err(Error::Config(_))));
    }
}
