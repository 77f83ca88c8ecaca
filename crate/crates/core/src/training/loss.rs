use crate::error::{Error, Result};
use crate::factors::{apply_into, ApplyWorkspace, FactorTensor};
use crate::linalg::{dot, CsrMatrix, DenseMat, Real, RngStream};
use crate::par::Exec;

fn norms(z: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if z.len() != y.len() {
        return Err(Error::contract("cosine loss: Z and Y differ in size"));
    }
    let (nz, ny) = (dot(z, z).sqrt(), dot(y, y).sqrt());
    if nz == 0.0 || ny == 0.0 || !nz.is_finite() || !ny.is_finite() {
        return Err(Error::Degenerate(format!(
            "cosine loss undefined for ‖Z‖ = {nz:.3e}, ‖Y‖ = {ny:.3e}"
        )));
    }
    Ok((dot(z, y), nz, ny))
}

/// `1 − ⟨Z, Y⟩_F / (‖Z‖_F ‖Y‖_F)`, one global angle over all entries.
pub fn cosine_loss(z: &[f64], y: &[f64]) -> Result<f64> {
    let (zy, nz, ny) = norms(z, y)?;
    Ok(1.0 - zy / (nz * ny))
}

/// Cosine loss and `scale · ∂L/∂Y` written into `g`.
pub fn cosine_loss_grad(z: &[f64], y: &[f64], scale: f64, g: &mut [f64]) -> Result<f64> {
    let (zy, nz, ny) = norms(z, y)?;
    let a = scale / (nz * ny);
    let b = scale * zy / (nz * ny * ny * ny);
    for ((gi, zi), yi) in g.iter_mut().zip(z).zip(y) {
        *gi = -(a * zi - b * yi);
    }
    Ok(1.0 - zy / (nz * ny))
}

/// `(½ ‖Π_u − Π_v‖_F², 1 − cos² θ)` with the projectors formed explicitly.
pub fn projector_distance(u: &[f64], v: &[f64]) -> (f64, f64) {
    let n = u.len();
    let (nu, nv) = (dot(u, u), dot(v, v));
    let mut d = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = u[i] * u[j] / nu - v[i] * v[j] / nv;
            d += e * e;
        }
    }
    let c = dot(u, v);
    (0.5 * d, 1.0 - c * c / (nu * nv))
}

/// `‖(1/‖A‖) A M Z − Z‖_F²` for row-major `Z` with `ncols` columns.
pub fn sai_loss<T: Real>(
    a: &CsrMatrix,
    m: &FactorTensor<T>,
    z: &[f64],
    ncols: usize,
    norm_a: f64,
    exec: Exec,
) -> Result<f64> {
    if !(norm_a > 0.0) {
        return Err(Error::contract("SAI loss needs a positive operator norm"));
    }
    let mut ws = ApplyWorkspace::new(m, ncols);
    let mut w = vec![0.0; z.len()];
    apply_into(exec, m, &a.diagonal(), z, ncols, &mut ws, &mut w)?;
    let mut aw = vec![0.0; z.len()];
    a.spmm_into(exec, &w, ncols, &mut aw)?;
    Ok(aw
        .iter()
        .zip(z)
        .map(|(x, zi)| {
            let e = x / norm_a - zi;
            e * e
        })
        .sum())
}

/// Dense reference for [`sai_loss`].
pub fn sai_loss_dense(a: &DenseMat<f64>, m: &DenseMat<f64>, z: &DenseMat<f64>, norm_a: f64) -> Result<f64> {
    let amz = a.matmul(&m.matmul(z)?)?;
    Ok(amz
        .as_slice()
        .iter()
        .zip(z.as_slice())
        .map(|(x, zi)| (x / norm_a - zi).powi(2))
        .sum())
}

/// Power-iteration estimate of `‖A‖₂` for symmetric `A`.
pub fn spectral_norm_estimate(a: &CsrMatrix, steps: usize, tol: f64, stream: &mut RngStream) -> Result<f64> {
    let n = a.n_rows();
    let mut v = stream.sample_normal(n);
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..steps {
        a.spmv_into(Exec::Sequential, &v, &mut w)?;
        let nw = dot(&w, &w).sqrt();
        if nw == 0.0 {
            return Ok(0.0);
        }
        let prev = est;
        est = nw;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if (est - prev).abs() <= tol * est {
            break;
        }
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_y_is_degenerate() {
        assert!(matches!(
            cosine_loss(&[1.0, 2.0], &[0.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let z = [0.3, -1.2, 0.7, 2.0];
        let y = [1.0, 0.4, -0.5, 1.5];
        let mut g = [0.0; 4];
        cosine_loss_grad(&z, &y, 1.0, &mut g).unwrap();
        for i in 0..4 {
            let h = 1e-6;
            let (mut yp, mut ym) = (y, y);
            yp[i] += h;
            ym[i] -= h;
            let fd = (cosine_loss(&z, &yp).unwrap() - cosine_loss(&z, &ym).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
