use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, spd_inverse, sym_eig, sym_eigvals, Accum, CsrMatrix, DenseMat, Op};
use crate::pcg::Preconditioner;

/// Default dimension cap for the dense analysis paths.
pub const ANALYSIS_CAP: usize = 2048;

/// Null-space handling for spectral quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deflation {
    /// Work on the orthogonal complement of the constant vector.
    #[default]
    Constant,
    None,
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::config(format!(
            "dense analysis needs N <= {cap}, got N = {n}; use a smaller scale or raise the dense cap"
        )));
    }
    Ok(())
}

/// `X -> H X H` for the Householder reflector that swaps the unit constant
/// vector with the last basis vector, truncated to the leading `n-1` block.
fn deflate(x: &DenseMat<f64>) -> DenseMat<f64> {
    let n = x.rows();
    let mut w = vec![1.0 / (n as f64).sqrt(); n];
    w[n - 1] -= 1.0;
    let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nw == 0.0 {
        return DenseMat::from_fn(n - 1, n - 1, |i, j| x[(i, j)]);
    }
    w.iter_mut().for_each(|v| *v /= nw);
    let xw = x.matvec(&w).expect("square");
    let wx: Vec<f64> = x.transpose().matvec(&w).expect("square");
    let wxw: f64 = w.iter().zip(&xw).map(|(a, b)| a * b).sum();
    DenseMat::from_fn(n - 1, n - 1, |i, j| {
        x[(i, j)] - 2.0 * w[i] * wx[j] - 2.0 * xw[i] * w[j] + 4.0 * wxw * w[i] * w[j]
    })
}

/// `A⁺` of a Neumann operator (or `A⁻¹` with no deflation) via dense Cholesky of
/// `A + (α/N) 1 1ᵀ`, `α` the mean diagonal.
pub fn pseudo_inverse(a: &CsrMatrix, deflation: Deflation, cap: usize) -> Result<DenseMat<f64>> {
    let n = a.n_rows();
    check_cap(n, cap)?;
    let mut dense = a.to_dense();
    match deflation {
        Deflation::None => spd_inverse(&dense),
        Deflation::Constant => {
            let alpha = a.diagonal().iter().sum::<f64>() / n as f64;
            let shift = alpha / n as f64;
            dense.as_mut_slice().iter_mut().for_each(|v| *v += shift);
            let mut inv = spd_inverse(&dense)?;
            let back = 1.0 / (alpha * n as f64);
            inv.as_mut_slice().iter_mut().for_each(|v| *v -= back);
            Ok(inv)
        }
    }
}

/// Dense `M` from `n` unit-vector applies, symmetrized.
pub fn dense_preconditioner(n: usize, m: &mut dyn Preconditioner, cap: usize) -> Result<DenseMat<f64>> {
    check_cap(n, cap)?;
    let mut out = DenseMat::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        m.apply(&e, &mut col)?;
        e[j] = 0.0;
        for i in 0..n {
            out[(i, j)] = col[i];
        }
    }
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub method: String,
    pub n: usize,
    pub frame: Option<String>,
    /// Ascending eigenvalues of `A^{1/2} M A^{1/2}` on the deflated space.
    pub eigenvalues: Vec<f64>,
    /// `λ_max / λ_min` over the positive part of the spectrum.
    pub kappa: f64,
    /// Eigenvalues below `-1e-10 max|λ|`.
    pub neg_count: usize,
}

impl SpectrumReport {
    /// `κ(baseline) / κ(self)`.
    pub fn reduction_vs(&self, baseline: &SpectrumReport) -> f64 {
        baseline.kappa / self.kappa
    }

    pub fn row(&self) -> SpectrumRow {
        SpectrumRow {
            method: self.method.clone(),
            n: self.n,
            frame: self.frame.clone().unwrap_or_default(),
            kappa: self.kappa,
            neg_count: self.neg_count,
        }
    }
}

/// One line of the spectra CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub method: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub frame: String,
    pub kappa: f64,
    pub neg_count: usize,
}

/// Square root of the deflated operator, shared by every preconditioner
/// evaluated on one frame.
pub struct SpectrumContext {
    n: usize,
    deflation: Deflation,
    sqrt_a: DenseMat<f64>,
    a_values: Vec<f64>,
    frame: Option<String>,
}

fn spectrum_stats(values: &[f64]) -> (f64, usize) {
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = 1e-10 * scale;
    let neg = values.iter().filter(|&&v| v < -tol).count();
    let pos: Vec<f64> = values.iter().copied().filter(|&v| v > tol).collect();
    let kappa = match (pos.first(), pos.last()) {
        (Some(lo), Some(hi)) => hi / lo,
        _ => f64::INFINITY,
    };
    (kappa, neg)
}

impl SpectrumContext {
    pub fn new(a: &CsrMatrix, deflation: Deflation, cap: usize) -> Result<Self> {
        let n = a.n_rows();
        check_cap(n, cap)?;
        if n < 2 {
            return Err(Error::contract("spectrum needs N >= 2"));
        }
        let dense = a.to_dense();
        let ad = match deflation {
            Deflation::Constant => deflate(&dense),
            Deflation::None => dense,
        };
        let eig = sym_eig(&ad)?;
        let m = ad.rows();
        let mut scaled = eig.vectors.clone();
        for j in 0..m {
            let s = eig.values[j].max(0.0).sqrt();
            for i in 0..m {
                scaled[(i, j)] *= s;
            }
        }
        let mut sqrt_a = DenseMat::zeros(m, m);
        gemm(
            Op::N,
            Op::T,
            m,
            m,
            m,
            scaled.as_slice(),
            eig.vectors.as_slice(),
            sqrt_a.as_mut_slice(),
            Accum::Overwrite,
        );
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (sqrt_a[(i, j)] + sqrt_a[(j, i)]);
                sqrt_a[(i, j)] = v;
                sqrt_a[(j, i)] = v;
            }
        }
        Ok(SpectrumContext {
            n,
            deflation,
            sqrt_a,
            a_values: eig.values,
            frame: None,
        })
    }

    pub fn with_frame(mut self, frame: impl Into<String>) -> Self {
        self.frame = Some(frame.into());
        self
    }

    /// Spectrum with `M = I`.
    pub fn unpreconditioned(&self) -> SpectrumReport {
        let (kappa, neg_count) = spectrum_stats(&self.a_values);
        SpectrumReport {
            method: "none".into(),
            n: self.n,
            frame: self.frame.clone(),
            eigenvalues: self.a_values.clone(),
            kappa,
            neg_count,
        }
    }

    pub fn spectrum(&self, method: &str, m: &DenseMat<f64>) -> Result<SpectrumReport> {
        if m.shape() != (self.n, self.n) {
            return Err(Error::contract(format!(
                "preconditioner is {:?}, expected {n}x{n}",
                m.shape(),
                n = self.n
            )));
        }
        let md = match self.deflation {
            Deflation::Constant => deflate(m),
            Deflation::None => m.clone(),
        };
        let k = md.rows();
        let s = self.sqrt_a.as_slice();
        let mut tmp = DenseMat::zeros(k, k);
        gemm(Op::N, Op::N, k, k, k, s, md.as_slice(), tmp.as_mut_slice(), Accum::Overwrite);
        let mut t = DenseMat::zeros(k, k);
        gemm(Op::N, Op::N, k, k, k, tmp.as_slice(), s, t.as_mut_slice(), Accum::Overwrite);
        for i in 0..k {
            for j in 0..i {
                let v = 0.5 * (t[(i, j)] + t[(j, i)]);
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let values = sym_eigvals(&t)?;
        let (kappa, neg_count) = spectrum_stats(&values);
        Ok(SpectrumReport {
            method: method.into(),
            n: self.n,
            frame: self.frame.clone(),
            eigenvalues: values,
            kappa,
            neg_count,
        })
    }
}

/// Spectrum of `M A` for a single preconditioner.
pub fn precond_spectrum(
    a: &CsrMatrix,
    method: &str,
    m: &DenseMat<f64>,
    deflation: Deflation,
    cap: usize,
) -> Result<SpectrumReport> {
    SpectrumContext::new(a, deflation, cap)?.spectrum(method, m)
}
