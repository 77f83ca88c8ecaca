use super::Preconditioner;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// How the factorization handles the singular Neumann operators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShiftPolicy {
    /// Factor `A` as given.
    None,
    /// Factor `A + α I` with `α = rel · max_i A_ii`.
    Relative(f64),
}

impl Default for ShiftPolicy {
    fn default() -> Self {
        ShiftPolicy::Relative(1e-8)
    }
}

/// Zero-fill incomplete Cholesky factor `L` (lower triangle, diagonal last in each row).
#[derive(Clone, Debug)]
pub struct Ic0Factor {
    pub l: CsrMatrix,
    pub shift: f64,
}

pub fn ic0_factorize(a: &CsrMatrix, policy: ShiftPolicy) -> Result<Ic0Factor> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::contract("IC(0) needs a square matrix"));
    }
    let diag = a.diagonal();
    let shift = match policy {
        ShiftPolicy::None => 0.0,
        ShiftPolicy::Relative(rel) => rel * diag.iter().cloned().fold(0.0, f64::max),
    };
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols: Vec<u32> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    offsets.push(0);
    for i in 0..n {
        let (c, v) = a.row(i);
        let mut has_diag = false;
        for (&j, &x) in c.iter().zip(v) {
            if (j as usize) < i {
                cols.push(j);
                vals.push(x);
            } else if j as usize == i {
                cols.push(j);
                vals.push(x + shift);
                has_diag = true;
            }
        }
        if !has_diag {
            return Err(Error::Numerical(format!("IC(0): row {i} has no diagonal entry")));
        }
        offsets.push(cols.len());
    }

    for i in 0..n {
        let (s, e) = (offsets[i], offsets[i + 1]);
        for p in s..e - 1 {
            let k = cols[p] as usize;
            let (ks, ke) = (offsets[k], offsets[k + 1]);
            // Sparse dot of row i and row k over columns j < k.
            let mut sum = 0.0;
            let (mut a_i, mut a_k) = (s, ks);
            while a_i < p && a_k < ke - 1 {
                match cols[a_i].cmp(&cols[a_k]) {
                    std::cmp::Ordering::Less => a_i += 1,
                    std::cmp::Ordering::Greater => a_k += 1,
                    std::cmp::Ordering::Equal => {
                        sum += vals[a_i] * vals[a_k];
                        a_i += 1;
                        a_k += 1;
                    }
                }
            }
            vals[p] = (vals[p] - sum) / vals[ke - 1];
        }
        let sq: f64 = vals[s..e - 1].iter().map(|v| v * v).sum();
        let pivot = vals[e - 1] - sq;
        if !(pivot > 0.0) {
            return Err(Error::Numerical(format!(
                "IC(0): nonpositive pivot {pivot:.3e} at row {i} (shift {shift:.3e})"
            )));
        }
        vals[e - 1] = pivot.sqrt();
    }
    Ok(Ic0Factor {
        l: CsrMatrix::new(n, n, offsets, cols, vals)?,
        shift,
    })
}

/// Applies `(L Lᵀ)⁻¹` by forward and backward substitution.
#[derive(Clone, Debug)]
pub struct Ic0Applier {
    factor: Ic0Factor,
}

impl Ic0Applier {
    pub fn new(a: &CsrMatrix, policy: ShiftPolicy) -> Result<Self> {
        Ok(Ic0Applier {
            factor: ic0_factorize(a, policy)?,
        })
    }

    pub fn factor(&self) -> &Ic0Factor {
        &self.factor
    }
}

impl Preconditioner for Ic0Applier {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()> {
        let l = &self.factor.l;
        let n = l.n_rows();
        if r.len() != n || z.len() != n {
            return Err(Error::contract("IC(0) apply: length mismatch"));
        }
        for i in 0..n {
            let (c, v) = l.row(i);
            let last = c.len() - 1;
            let mut s = r[i];
            for p in 0..last {
                s -= v[p] * z[c[p] as usize];
            }
            z[i] = s / v[last];
        }
        for i in (0..n).rev() {
            let (c, v) = l.row(i);
            let last = c.len() - 1;
            z[i] /= v[last];
            let zi = z[i];
            for p in 0..last {
                z[c[p] as usize] -= v[p] * zi;
            }
        }
        Ok(())
    }

    fn name(&self) -> &str {
        "ic0"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_is_exact_cholesky() {
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t).unwrap();
        let mut ic = Ic0Applier::new(&a, ShiftPolicy::None).unwrap();
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let b = a.spmv(&x).unwrap();
        let mut z = vec![0.0; n];
        ic.apply(&b, &mut z).unwrap();
        for (zi, xi) in z.iter().zip(&x) {
            assert!((zi - xi).abs() < 1e-12);
        }
    }

    #[test]
    fn pattern_is_lower_triangle_of_a() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 2.0), (0, 2, -1.0), (1, 1, 2.0), (2, 0, -1.0), (2, 2, 2.0)],
        )
        .unwrap();
        let f = ic0_factorize(&a, ShiftPolicy::None).unwrap();
        for i in 0..3 {
            for &j in f.l.row(i).0 {
                assert!(j as usize <= i);
                assert!(a.get(i, j as usize) != 0.0);
            }
        }
    }

    #[test]
    fn singular_operator_needs_shift() {
        let a = CsrMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(ic0_factorize(&a, ShiftPolicy::None).is_err());
        assert!(ic0_factorize(&a, ShiftPolicy::default()).is_ok());
    }
}
