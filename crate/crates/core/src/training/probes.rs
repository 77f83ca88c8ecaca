use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, RngStream};
use crate::par::Exec;

/// `K_z = max(64, ceil(sqrt(N)))`
pub fn probe_count(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r.max(64)
}

/// `N x K_z` probe matrix stored row-major.
#[derive(Clone, Debug)]
pub struct ProbeBatch {
    pub n: usize,
    pub k: usize,
    pub z: Vec<f64>,
    /// `(ω, steps)` once smoothed.
    pub smoothing: Option<(f64, usize)>,
}

/// Unsmoothed i.i.d. standard normal probes with `k` columns
/// (`probe_count(n)` when `k` is `None`).
pub fn sample_probes(n: usize, k: Option<usize>, stream: &mut RngStream) -> ProbeBatch {
    let k = k.unwrap_or_else(|| probe_count(n));
    ProbeBatch {
        n,
        k,
        z: stream.sample_normal(n * k),
        smoothing: None,
    }
}

/// `steps` damped Jacobi sweeps `z <- z − ω D⁻¹ A z` on every column.
pub fn smooth_probes(a: &CsrMatrix, batch: &mut ProbeBatch, omega: f64, steps: usize, exec: Exec) -> Result<()> {
    let (n, k) = (batch.n, batch.k);
    if a.n_rows() != n {
        return Err(Error::contract("probe batch and operator differ in size"));
    }
    let diag = a.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::contract("smoothing needs a positive diagonal"));
    }
    let mut az = vec![0.0; n * k];
    for _ in 0..steps {
        a.spmm_into(exec, &batch.z, k, &mut az)?;
        for i in 0..n {
            let s = omega / diag[i];
            for j in 0..k {
                batch.z[i * k + j] -= s * az[i * k + j];
            }
        }
    }
    batch.smoothing = Some(match batch.smoothing {
        Some((w, s)) if w == omega => (w, s + steps),
        _ => (omega, steps),
    });
    Ok(())
}
