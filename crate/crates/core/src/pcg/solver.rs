use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Preconditioner;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, CsrMatrix};
use crate::par::Exec;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolveConfig {
    pub rtol: f64,
    pub max_iters: usize,
    /// Keep a copy of every residual vector (for visualization).
    pub record_residuals: bool,
    pub exec: Exec,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            rtol: 1e-8,
            max_iters: 20_000,
            record_residuals: false,
            exec: Exec::Sequential,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) {
            return Err(Error::config(format!("rtol must be positive, got {}", self.rtol)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// `pᵀAp` went clearly negative: the preconditioned operator is not SPD.
    Breakdown,
    /// `pᵀAp` vanished within round-off before the tolerance was met.
    Stagnated,
    /// A non-finite scalar appeared.
    NonFinite,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SolveReport {
    pub method: String,
    pub frame: Option<String>,
    pub n: usize,
    /// Number of A-multiplies performed.
    pub iterations: usize,
    pub converged: bool,
    pub status: SolveStatus,
    /// Iteration at which breakdown was detected, if any.
    pub breakdown_at: Option<usize>,
    /// `‖r_k‖ / ‖r_0‖` for `k = 0, 1, ...`.
    pub residual_history: Vec<f64>,
    /// `‖b − A x‖ / ‖b‖` recomputed from the final iterate.
    pub true_residual: f64,
    pub wall_ms: f64,
}

impl SolveReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub x: Vec<f64>,
    pub report: SolveReport,
    /// Residual vectors `r_0, r_1, ...` when requested.
    pub residuals: Option<Vec<Vec<f64>>>,
}

/// Solves `A x = b` from `x_0 = 0`.
///
/// Iteration `k` is the `k`-th multiply by `A`; the solve stops at the first
/// `k` with `‖r_k‖ / ‖r_0‖ ≤ rtol`.
pub fn pcg_solve(
    a: &CsrMatrix,
    b: &[f64],
    precond: &mut dyn Preconditioner,
    cfg: &SolveConfig,
) -> Result<SolveOutput> {
    cfg.validate()?;
    let n = a.n_rows();
    if b.len() != n || a.n_cols() != n {
        return Err(Error::contract(format!(
            "pcg: A is {}x{}, b has length {}",
            a.n_rows(),
            a.n_cols(),
            b.len()
        )));
    }
    let start = Instant::now();
    let a_fro = a.frobenius_norm();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    let r0 = dot(&r, &r).sqrt();
    let mut history = vec![1.0];
    let mut residuals = cfg.record_residuals.then(|| vec![r.clone()]);
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut breakdown_at = None;

    if r0 == 0.0 {
        status = SolveStatus::Converged;
    } else {
        precond.apply(&r, &mut z)?;
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for it in 1..=cfg.max_iters {
            a.spmv_into(cfg.exec, &p, &mut q)?;
            iterations = it;
            let pq = dot(&p, &q);
            if !pq.is_finite() || !rz.is_finite() {
                status = SolveStatus::NonFinite;
                break;
            }
            if pq <= 0.0 {
                if pq < -1e-12 * dot(&p, &p) * a_fro {
                    status = SolveStatus::Breakdown;
                    breakdown_at = Some(it);
                } else {
                    status = SolveStatus::Stagnated;
                }
                break;
            }
            let alpha = rz / pq;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &q, &mut r);
            let rel = dot(&r, &r).sqrt() / r0;
            history.push(rel);
            if let Some(v) = residuals.as_mut() {
                v.push(r.clone());
            }
            if rel <= cfg.rtol {
                status = SolveStatus::Converged;
                break;
            }
            if !rel.is_finite() {
                status = SolveStatus::NonFinite;
                break;
            }
            precond.apply(&r, &mut z)?;
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
    }

    let ax = a.spmv(&x)?;
    let bnorm = dot(b, b).sqrt();
    let true_res = ax
        .iter()
        .zip(b)
        .map(|(u, v)| (v - u) * (v - u))
        .sum::<f64>()
        .sqrt()
        / if bnorm == 0.0 { 1.0 } else { bnorm };
    let report = SolveReport {
        method: precond.name().to_string(),
        frame: None,
        n,
        iterations,
        converged: status == SolveStatus::Converged,
        status,
        breakdown_at,
        residual_history: history,
        true_residual: true_res,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(SolveOutput {
        x,
        report,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcg::{IdentityPrecond, JacobiApplier};

    #[test]
    fn identity_system_one_iteration() {
        let a = CsrMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 0.0];
        let out = pcg_solve(&a, &b, &mut IdentityPrecond, &SolveConfig::default()).unwrap();
        assert!(out.report.converged);
        assert_eq!(out.report.iterations, 1);
    }

    #[test]
    fn diagonal_with_jacobi_one_iteration() {
        let d = [1.0, 10.0, 100.0, 3.0];
        let a = CsrMatrix::from_diagonal(&d);
        let mut j = JacobiApplier::new(&a).unwrap();
        let out = pcg_solve(&a, &[1.0, 1.0, 1.0, 1.0], &mut j, &SolveConfig::default()).unwrap();
        assert_eq!(out.report.iterations, 1);
    }

    #[test]
    fn zero_rhs_is_converged_immediately() {
        let a = CsrMatrix::identity(3);
        let out = pcg_solve(&a, &[0.0; 3], &mut IdentityPrecond, &SolveConfig::default()).unwrap();
        assert!(out.report.converged);
        assert_eq!(out.report.iterations, 0);
    }

    #[test]
    fn negative_curvature_is_breakdown() {
        let a = CsrMatrix::from_diagonal(&[1.0, -1.0]);
        let out = pcg_solve(&a, &[0.0, 1.0], &mut IdentityPrecond, &SolveConfig::default()).unwrap();
        assert_eq!(out.report.status, SolveStatus::Breakdown);
        assert_eq!(out.report.breakdown_at, Some(1));
    }
}
