use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hpartition::{HPartition, PackedLayout};
use crate::linalg::{CsrMatrix, Real, RngStream};

/// Packed factors `[F_k | B_m | (Ũ_k, Ṽ_k) | λ]` over one partition.
///
/// Each tile stores its coupling `B_m` (`L_s x L_s`, row-major), so the
/// tile section holds exactly `M_H L_s²` values.
#[derive(Clone, Debug)]
pub struct FactorTensor<T: Real = f32> {
    partition: Arc<HPartition>,
    layout: PackedLayout,
    data: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InitMode {
    /// `λ = 1`, every other section i.i.d. `N(0, σ²)`.
    JacobiSeed { sigma: f64 },
    /// Every section i.i.d. `N(0, σ²)`, with the gate centered at 1.
    Random { sigma: f64 },
}

impl Default for InitMode {
    fn default() -> Self {
        InitMode::JacobiSeed { sigma: 1e-2 }
    }
}

impl<T: Real> FactorTensor<T> {
    pub fn zeros(partition: Arc<HPartition>, coarse: usize) -> Result<Self> {
        let layout = partition.layout(coarse)?;
        Ok(FactorTensor {
            data: vec![T::ZERO; layout.width],
            partition,
            layout,
        })
    }

    pub fn from_packed(partition: Arc<HPartition>, coarse: usize, data: Vec<T>) -> Result<Self> {
        let layout = partition.layout(coarse)?;
        if data.len() != layout.width {
            return Err(Error::contract(format!(
                "packed tensor has {} values, layout needs {}",
                data.len(),
                layout.width
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite factor entry at {i}")));
        }
        Ok(FactorTensor {
            partition,
            layout,
            data,
        })
    }

    pub fn init(partition: Arc<HPartition>, coarse: usize, mode: InitMode, stream: &mut RngStream) -> Result<Self> {
        let mut t = Self::zeros(partition, coarse)?;
        let gate = t.layout.gate();
        let sigma = match mode {
            InitMode::JacobiSeed { sigma } | InitMode::Random { sigma } => sigma,
        };
        for v in &mut t.data[..gate.start] {
            *v = T::from_f64(sigma * stream.normal());
        }
        for v in &mut t.data[gate] {
            *v = T::from_f64(match mode {
                InitMode::JacobiSeed { .. } => 1.0,
                InitMode::Random { sigma } => 1.0 + sigma * stream.normal(),
            });
        }
        Ok(t)
    }

    pub fn partition(&self) -> &HPartition {
        &self.partition
    }

    pub fn partition_arc(&self) -> &Arc<HPartition> {
        &self.partition
    }

    pub fn layout(&self) -> &PackedLayout {
        &self.layout
    }

    pub fn n(&self) -> usize {
        self.partition.n
    }

    pub fn leaf(&self) -> usize {
        self.layout.leaf
    }

    pub fn coarse(&self) -> usize {
        self.layout.coarse
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// `F_k`, `L x L` row-major.
    pub fn leaf_factor(&self, k: usize) -> &[T] {
        &self.data[self.layout.leaf_factor(k)]
    }

    /// `B_m`, `L_s x L_s` row-major.
    pub fn tile_factor(&self, m: usize) -> &[T] {
        &self.data[self.layout.tile_factor(m)]
    }

    pub fn row_bridge(&self, k: usize) -> &[T] {
        &self.data[self.layout.row_bridge(k)]
    }

    pub fn col_bridge(&self, k: usize) -> &[T] {
        &self.data[self.layout.col_bridge(k)]
    }

    pub fn gate(&self) -> &[T] {
        &self.data[self.layout.gate()]
    }

    pub fn leaf_factor_mut(&mut self, k: usize) -> &mut [T] {
        let r = self.layout.leaf_factor(k);
        &mut self.data[r]
    }

    pub fn tile_factor_mut(&mut self, m: usize) -> &mut [T] {
        let r = self.layout.tile_factor(m);
        &mut self.data[r]
    }

    pub fn row_bridge_mut(&mut self, k: usize) -> &mut [T] {
        let r = self.layout.row_bridge(k);
        &mut self.data[r]
    }

    pub fn col_bridge_mut(&mut self, k: usize) -> &mut [T] {
        let r = self.layout.col_bridge(k);
        &mut self.data[r]
    }

    pub fn gate_mut(&mut self) -> &mut [T] {
        let r = self.layout.gate();
        &mut self.data[r]
    }

    /// Sets `B_m = U Vᵀ` from two `L_s x L_s` row-major factors.
    pub fn set_tile_from_uv(&mut self, m: usize, u: &[T], v: &[T]) {
        let ls = self.layout.coarse;
        crate::linalg::gemm(
            crate::linalg::Op::N,
            crate::linalg::Op::T,
            ls,
            ls,
            ls,
            u,
            v,
            self.tile_factor_mut(m),
            crate::linalg::Accum::Overwrite,
        );
    }

    pub fn cast<U: Real>(&self) -> FactorTensor<U> {
        FactorTensor {
            partition: self.partition.clone(),
            layout: self.layout,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.to_f64() * v.to_f64())
            .sum::<f64>()
            .sqrt()
    }
}

/// Initial factors for the system `a`.
pub fn init_factors(
    partition: Arc<HPartition>,
    coarse: usize,
    a: &CsrMatrix,
    mode: InitMode,
    stream: &mut RngStream,
) -> Result<FactorTensor<f32>> {
    if a.n_rows() != partition.n {
        return Err(Error::contract(format!(
            "partition is for N = {}, operator has {} rows",
            partition.n,
            a.n_rows()
        )));
    }
    FactorTensor::init(partition, coarse, mode, stream)
}
