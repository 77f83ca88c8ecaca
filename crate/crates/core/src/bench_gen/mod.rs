//! Multiphase pressure-Poisson benchmark frames.
//!
//! A frame places `N` cells on a near-square grid in Morton order, paints a
//! light/heavy density field with random barriers, assembles the Neumann
//! 5-point operator with harmonic-mean face weights and draws a right-hand
//! side orthogonal to the constant vector.

mod assemble;
mod dataset;
mod density;
mod grid;
pub mod io;

pub use assemble::{assemble_operator, face_weight};
pub use dataset::{digest_files, frame_key, frame_path, generate_dataset, DatasetSpec, Split};
pub use density::{sample_density, BarrierSpec, DensityField, Gap, Orientation};
pub use grid::{grid_dims, Grid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Purpose, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSeeds {
    pub master: u64,
    /// Stream key of the frame; encodes scale, split and index.
    pub frame: u64,
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub grid: Grid,
    pub rho: Vec<f64>,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub seeds: FrameSeeds,
    pub rho_heavy: f64,
    pub barriers: Vec<BarrierSpec>,
}

impl Frame {
    /// Generates the frame for `(master seed, frame key)`.
    pub fn generate(n: usize, seeds: FrameSeeds) -> Result<Frame> {
        let grid = Grid::new(n)?;
        let mut dens = RngStream::new(seeds.master, seeds.frame, Purpose::Density);
        let field = sample_density(&grid, &mut dens);
        let a = assemble_operator(&field.rho, &grid)?;
        let mut rhs = RngStream::new(seeds.master, seeds.frame, Purpose::Rhs);
        let b = sample_rhs(n, &mut rhs);
        Ok(Frame {
            grid,
            rho: field.rho,
            a,
            b,
            seeds,
            rho_heavy: field.rho_heavy,
            barriers: field.barriers,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }
}

/// Standard normal vector projected onto the complement of the constants.
pub fn sample_rhs(n: usize, stream: &mut RngStream) -> Vec<f64> {
    let mut z = stream.sample_normal(n);
    project_out_constant(&mut z);
    z
}

/// `z <- z - mean(z)`
pub fn project_out_constant(z: &mut [f64]) {
    if z.is_empty() {
        return;
    }
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    for v in z.iter_mut() {
        *v -= mean;
    }
}

pub(crate) fn check_positive(rho: &[f64]) -> Result<()> {
    if let Some(i) = rho.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::contract(format!(
            "density must be positive and finite, cell {i} has {}",
            rho[i]
        )));
    }
    Ok(())
}
