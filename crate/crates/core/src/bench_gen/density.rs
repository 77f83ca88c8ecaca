use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::linalg::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Vertical,
    Horizontal,
}

/// Where a barrier is left open along its length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gap {
    Top,
    Bottom,
    MiddleHole,
    Closed,
}

/// Fraction of the barrier length removed by a gap.
pub const GAP_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub orientation: Orientation,
    /// Slab center across the barrier, in `[0.2, 0.8]`.
    pub center: f64,
    /// Slab thickness, in `[0.05, 0.2]`.
    pub thickness: f64,
    pub gap: Gap,
}

impl BarrierSpec {
    pub fn sample(stream: &mut RngStream) -> Self {
        let orientation = if stream.below(2) == 0 {
            Orientation::Vertical
        } else {
            Orientation::Horizontal
        };
        let center = stream.uniform_in(0.2, 0.8);
        let thickness = stream.uniform_in(0.05, 0.2);
        let gap = match stream.below(4) {
            0 => Gap::Top,
            1 => Gap::Bottom,
            2 => Gap::MiddleHole,
            _ => Gap::Closed,
        };
        BarrierSpec {
            orientation,
            center,
            thickness,
            gap,
        }
    }

    /// Whether the point `(px, py)` of the unit square lies in the heavy region.
    ///
    /// The slab is clipped to the domain first; the gap is then cut out of the
    /// clipped slab along its length.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (across, along) = match self.orientation {
            Orientation::Vertical => (px, py),
            Orientation::Horizontal => (py, px),
        };
        if (across - self.center).abs() > 0.5 * self.thickness {
            return false;
        }
        match self.gap {
            Gap::Top => along < 1.0 - GAP_FRACTION,
            Gap::Bottom => along >= GAP_FRACTION,
            Gap::MiddleHole => (along - 0.5).abs() >= 0.5 * GAP_FRACTION,
            Gap::Closed => true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DensityField {
    pub rho: Vec<f64>,
    pub rho_heavy: f64,
    pub barriers: Vec<BarrierSpec>,
    pub heavy: Vec<bool>,
}

pub const RHO_LIGHT: f64 = 1.0;
pub const RHO_HEAVY_RANGE: (f64, f64) = (5.0, 100.0);
pub const NOISE_STD: f64 = 0.05;
pub const NOISE_FLOOR: f64 = 0.5;

/// Draws `rho_heavy`, the barrier set and the per-cell noise, in that order.
pub fn sample_density(grid: &Grid, stream: &mut RngStream) -> DensityField {
    let (lo, hi) = RHO_HEAVY_RANGE;
    let rho_heavy = (lo.ln() + (hi.ln() - lo.ln()) * stream.uniform()).exp();
    let n_b = 1 + stream.below(3) as usize;
    let barriers: Vec<BarrierSpec> = (0..n_b).map(|_| BarrierSpec::sample(stream)).collect();
    let mut heavy = Vec::with_capacity(grid.n);
    let mut rho = Vec::with_capacity(grid.n);
    for dof in 0..grid.n {
        let (px, py) = grid.position(dof);
        let h = barriers.iter().any(|b| b.contains(px, py));
        let noise = (1.0 + NOISE_STD * stream.normal()).max(NOISE_FLOOR);
        heavy.push(h);
        rho.push(if h { rho_heavy } else { RHO_LIGHT } * noise);
    }
    DensityField {
        rho,
        rho_heavy,
        barriers,
        heavy,
    }
}
