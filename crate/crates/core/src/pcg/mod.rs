//! Preconditioned conjugate gradient with double-precision scalars and
//! pluggable preconditioners.

mod ic0;
mod jacobi;
mod solver;

pub use ic0::{ic0_factorize, Ic0Applier, Ic0Factor, ShiftPolicy};
pub use jacobi::JacobiApplier;
pub use solver::{pcg_solve, SolveConfig, SolveOutput, SolveReport, SolveStatus};

use crate::error::Result;

/// `z = M r` for some fixed preconditioner `M`.
///
/// Implementations may keep scratch space, so each solver thread owns its
/// own applier.
pub trait Preconditioner {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()>;

    /// Method tag used in reports.
    fn name(&self) -> &str;
}

/// `M = I`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityPrecond;

impl Preconditioner for IdentityPrecond {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.copy_from_slice(r);
        Ok(())
    }

    fn name(&self) -> &str {
        "none"
    }
}
