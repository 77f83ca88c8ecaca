use crate::bench_gen::Frame;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

use super::layers::gelu;
use super::{ToyNetConfig, ToyNetWeights};

/// Per-node scalars: log density, unit-square position, one flag per missing face neighbour.
pub const NODE_FEATURES: usize = 7;

/// Summary statistics available to the broadcast global context.
pub const GLOBAL_STATS: usize = 12;

/// Graph inputs of the encoder, independent of how the system was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeInput {
    pub rho: Vec<f64>,
    pub pos: Vec<[f64; 2]>,
    /// Missing neighbour on the left, right, bottom, top.
    pub boundary: Vec<[bool; 4]>,
}

impl NodeInput {
    pub fn from_frame(frame: &Frame) -> Self {
        let g = &frame.grid;
        let n = frame.n();
        let mut pos = Vec::with_capacity(n);
        let mut boundary = Vec::with_capacity(n);
        for dof in 0..n {
            let (x, y) = g.position(dof);
            pos.push([x, y]);
            let (cx, cy) = g.coords(dof);
            let (cx, cy) = (cx as isize, cy as isize);
            boundary.push([
                g.dof_at(cx - 1, cy).is_none(),
                g.dof_at(cx + 1, cy).is_none(),
                g.dof_at(cx, cy - 1).is_none(),
                g.dof_at(cx, cy + 1).is_none(),
            ]);
        }
        NodeInput {
            rho: frame.rho.clone(),
            pos,
            boundary,
        }
    }

    pub fn n(&self) -> usize {
        self.rho.len()
    }

    pub fn validate(&self, a: &CsrMatrix) -> Result<()> {
        let n = self.n();
        if self.pos.len() != n || self.boundary.len() != n || a.n_rows() != n || a.n_cols() != n {
            return Err(Error::contract(format!(
                "node input sizes ({n}, {}, {}) do not match a {}x{} operator",
                self.pos.len(),
                self.boundary.len(),
                a.n_rows(),
                a.n_cols()
            )));
        }
        if self.rho.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::contract("densities must be finite and positive"));
        }
        let diag = a.diagonal();
        if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::contract("operator diagonal must be finite and positive"));
        }
        Ok(())
    }
}

fn moments(v: &[f64]) -> [f64; 4] {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [mean, std, min, max]
}

/// Permutation-invariant frame statistics, zero-padded or truncated to `width`.
pub fn global_context(input: &NodeInput, a: &CsrMatrix, width: usize) -> Vec<f64> {
    let n = input.n();
    let log_rho: Vec<f64> = input.rho.iter().map(|r| r.ln()).collect();
    let diag = a.diagonal();
    let log_diag: Vec<f64> = diag.iter().map(|d| d.ln()).collect();
    let mut coupling = 0.0;
    for (i, &di) in diag.iter().enumerate() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j as usize != i {
                coupling += v.abs() / di;
            }
        }
    }
    let on_boundary = input.boundary.iter().filter(|b| b.iter().any(|&f| f)).count();
    let mut stats = Vec::with_capacity(GLOBAL_STATS);
    stats.extend(moments(&log_rho));
    stats.extend(moments(&log_diag));
    stats.push((n as f64).ln());
    stats.push(a.nnz() as f64 / n as f64);
    stats.push(coupling / n as f64);
    stats.push(on_boundary as f64 / n as f64);
    stats.resize(width, 0.0);
    stats
}

/// Feature matrix `N x (NODE_FEATURES + d_glob)`.
pub fn node_features(input: &NodeInput, a: &CsrMatrix, d_glob: usize) -> Vec<f64> {
    let glob = global_context(input, a, d_glob);
    let mut out = Vec::with_capacity(input.n() * (NODE_FEATURES + d_glob));
    for i in 0..input.n() {
        out.push(input.rho[i].ln());
        out.extend_from_slice(&input.pos[i]);
        out.extend(input.boundary[i].iter().map(|&b| if b { 1.0 } else { 0.0 }));
        out.extend_from_slice(&glob);
    }
    out
}

/// Node embeddings `N x d`: MLP lift followed by residual graph convolutions
/// with `diag(A)^{-1} A` as the propagation operator.
pub fn encode(input: &NodeInput, a: &CsrMatrix, cfg: &ToyNetConfig, w: &ToyNetWeights) -> Result<Vec<f64>> {
    input.validate(a)?;
    let n = input.n();
    let d = cfg.d;
    let feats = node_features(input, a, cfg.d_glob);
    let mut h = w.encoder.forward(&feats, n);
    let diag = a.diagonal();
    let mut msg = vec![0.0; n * d];
    for layer in &w.gcn {
        msg.fill(0.0);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let out = &mut msg[i * d..(i + 1) * d];
            for (&j, &v) in cols.iter().zip(vals) {
                let c = v / diag[i];
                for (o, hj) in out.iter_mut().zip(&h[j as usize * d..(j as usize + 1) * d]) {
                    *o += c * hj;
                }
            }
        }
        let upd = layer.forward(&msg, n);
        for (hi, u) in h.iter_mut().zip(&upd) {
            *hi += gelu(*u);
        }
    }
    Ok(h)
}
