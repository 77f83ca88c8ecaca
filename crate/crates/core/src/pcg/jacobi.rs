use super::Preconditioner;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// `z_i = r_i / A_ii`
#[derive(Clone, Debug)]
pub struct JacobiApplier {
    inv_diag: Vec<f64>,
}

impl JacobiApplier {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        Self::from_diagonal(&a.diagonal())
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if let Some(i) = diag.iter().position(|&d| d == 0.0 || !d.is_finite()) {
            return Err(Error::contract(format!(
                "Jacobi needs a nonzero finite diagonal, entry {i} is {}",
                diag[i]
            )));
        }
        Ok(JacobiApplier {
            inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
        })
    }
}

impl Preconditioner for JacobiApplier {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()> {
        if r.len() != self.inv_diag.len() || z.len() != r.len() {
            return Err(Error::contract("Jacobi apply: length mismatch"));
        }
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
        Ok(())
    }

    fn name(&self) -> &str {
        "jacobi"
    }
}
