//! A forward-only, toy-width version of the two-stream factor network.
//!
//! Node embeddings from a graph encoder feed a leaf-windowed attention stack and
//! a tile-pooled attention stack that exchange information through per-layer
//! row, column and global highway buffers. Linear heads then fill a
//! [`FactorTensor`] in the packed apply layout.

mod encoder;
mod layers;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bench_gen::Frame;
use crate::error::{Error, Result};
use crate::factors::FactorTensor;
use crate::hpartition::HPartition;
use crate::linalg::{CsrMatrix, Purpose, RngStream};

pub use encoder::{encode, global_context, node_features, NodeInput, GLOBAL_STATS, NODE_FEATURES};
pub use layers::{gelu, Block, LayerNorm, Linear, Mlp2};

/// Width of the edge descriptor `(dx, dy, |d|, A_ij / sqrt(A_ii A_jj))`.
pub const EDGE_FEATURES: usize = 4;
const EDGE_HIDDEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyNetConfig {
    pub d: usize,
    pub n_l: usize,
    pub h: usize,
    pub n_gcn: usize,
    pub leaf: usize,
    pub coarse: usize,
    pub d_glob: usize,
}

impl Default for ToyNetConfig {
    fn default() -> Self {
        ToyNetConfig {
            d: 16,
            n_l: 2,
            h: 2,
            n_gcn: 2,
            leaf: 16,
            coarse: 4,
            d_glob: 12,
        }
    }
}

impl ToyNetConfig {
    /// Pooling factor `L / L_s`.
    pub fn p_off(&self) -> usize {
        self.leaf / self.coarse
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.h == 0 || !self.d.is_multiple_of(self.h) {
            return Err(Error::config(format!("heads h = {} must divide d = {}", self.h, self.d)));
        }
        if self.coarse == 0 || !self.leaf.is_multiple_of(self.coarse) {
            return Err(Error::config(format!(
                "L_s = {} must divide L = {}",
                self.coarse, self.leaf
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyNetWeights {
    pub config: ToyNetConfig,
    pub encoder: Mlp2,
    pub gcn: Vec<Linear>,
    pub diag_blocks: Vec<Block>,
    pub tile_blocks: Vec<Block>,
    pub diag_edge: Mlp2,
    pub tile_edge: Mlp2,
    pub diag_norm: LayerNorm,
    pub tile_norm: LayerNorm,
    pub leaf_head: Mlp2,
    pub u_head: Linear,
    pub v_head: Linear,
    pub row_bridge_head: Linear,
    pub col_bridge_head: Linear,
    pub gate_head: Linear,
}

impl ToyNetWeights {
    /// All parameters zero, layer norms included.
    pub fn zeros(cfg: ToyNetConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        Ok(ToyNetWeights {
            config: cfg,
            encoder: Mlp2::zeros(NODE_FEATURES + cfg.d_glob, d, d),
            gcn: (0..cfg.n_gcn).map(|_| Linear::zeros(d, d)).collect(),
            diag_blocks: (0..cfg.n_l).map(|_| Block::zeros(d)).collect(),
            tile_blocks: (0..cfg.n_l).map(|_| Block::zeros(d)).collect(),
            diag_edge: Mlp2::zeros(EDGE_FEATURES, EDGE_HIDDEN, cfg.h),
            tile_edge: Mlp2::zeros(EDGE_FEATURES, EDGE_HIDDEN, cfg.h),
            diag_norm: LayerNorm::zeros(d),
            tile_norm: LayerNorm::zeros(d),
            leaf_head: Mlp2::zeros(d, d, cfg.leaf),
            u_head: Linear::zeros(d, cfg.coarse),
            v_head: Linear::zeros(d, cfg.coarse),
            row_bridge_head: Linear::zeros(d, cfg.coarse),
            col_bridge_head: Linear::zeros(d, cfg.coarse),
            gate_head: Linear::zeros(d, 1),
        })
    }

    /// Deterministic random initialization. The gate bias starts at one, so an
    /// untrained network is a perturbed Jacobi preconditioner.
    pub fn init(cfg: ToyNetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        let s = &mut RngStream::new(seed, 0, Purpose::NetworkWeights);
        let encoder = Mlp2::init(NODE_FEATURES + cfg.d_glob, d, d, s);
        let gcn = (0..cfg.n_gcn).map(|_| Linear::init(d, d, s)).collect();
        let diag_blocks = (0..cfg.n_l).map(|_| Block::init(d, s)).collect();
        let tile_blocks = (0..cfg.n_l).map(|_| Block::init(d, s)).collect();
        let diag_edge = Mlp2::init(EDGE_FEATURES, EDGE_HIDDEN, cfg.h, s);
        let tile_edge = Mlp2::init(EDGE_FEATURES, EDGE_HIDDEN, cfg.h, s);
        let mut leaf_head = Mlp2::init(d, d, cfg.leaf, s);
        // keeps F_k F_kᵀ near unit scale for any leaf size
        let shrink = 1.0 / (cfg.leaf as f64).sqrt();
        leaf_head.l2.w.iter_mut().for_each(|w| *w *= shrink);
        let u_head = Linear::init(d, cfg.coarse, s);
        let v_head = Linear::init(d, cfg.coarse, s);
        let row_bridge_head = Linear::init(d, cfg.coarse, s);
        let col_bridge_head = Linear::init(d, cfg.coarse, s);
        let mut gate_head = Linear::init(d, 1, s);
        gate_head.w.iter_mut().for_each(|w| *w *= 0.1);
        gate_head.b[0] = 1.0;
        Ok(ToyNetWeights {
            config: cfg,
            encoder,
            gcn,
            diag_blocks,
            tile_blocks,
            diag_edge,
            tile_edge,
            diag_norm: LayerNorm::new(d),
            tile_norm: LayerNorm::new(d),
            leaf_head,
            u_head,
            v_head,
            row_bridge_head,
            col_bridge_head,
            gate_head,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite()
            && self.gcn.iter().all(Linear::all_finite)
            && self.diag_blocks.iter().chain(&self.tile_blocks).all(Block::all_finite)
            && self.diag_edge.all_finite()
            && self.tile_edge.all_finite()
            && self.diag_norm.all_finite()
            && self.tile_norm.all_finite()
            && self.leaf_head.all_finite()
            && [&self.u_head, &self.v_head, &self.row_bridge_head, &self.col_bridge_head, &self.gate_head]
                .iter()
                .all(|l| l.all_finite())
    }
}

/// Dispatch counts per attention family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AttentionCounter {
    pub leaf_batched: usize,
    pub tile_batched: usize,
}

impl AttentionCounter {
    /// Number of distinct attention families that ran.
    pub fn families(&self) -> usize {
        usize::from(self.leaf_batched > 0) + usize::from(self.tile_batched > 0)
    }
}

/// Highway state of one layer, kept for conservation checks.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    /// Leaf-stream tokens after attention, `N x d`.
    pub diag_tokens: Vec<f64>,
    /// Tile-stream tokens after attention, `(M_H L_s) x d`.
    pub tile_tokens: Vec<f64>,
    pub row: Vec<f64>,
    pub col: Vec<f64>,
    pub global: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub d: usize,
    pub layers: Vec<LayerTrace>,
    pub attention: AttentionCounter,
    /// Largest `|sum_j p_ij - 1|` over every attention row.
    pub max_attention_row_error: f64,
}

/// Largest relative gap between the column sums of each highway buffer and the
/// plain sum of all token embeddings scattered into it.
pub fn highway_conservation_check(trace: &ForwardTrace) -> f64 {
    let d = trace.d;
    let colsum = |m: &[f64]| {
        let mut s = vec![0.0; d];
        for row in m.chunks(d) {
            for (a, b) in s.iter_mut().zip(row) {
                *a += b;
            }
        }
        s
    };
    let mut worst = 0.0f64;
    for layer in &trace.layers {
        let tokens: Vec<f64> = colsum(&layer.diag_tokens)
            .iter()
            .zip(colsum(&layer.tile_tokens))
            .map(|(a, b)| a + b)
            .collect();
        let scale = tokens.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for buf in [colsum(&layer.row), colsum(&layer.col), layer.global.clone()] {
            let gap = buf.iter().zip(&tokens).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let rel = if scale > 0.0 { gap / scale } else { gap };
            worst = worst.max(rel);
        }
    }
    worst
}

/// Nodes of a tile strip grouped by coarse token: node `i` of the strip starting
/// at `start` belongs to token `((i - start) mod L) / p_off`.
fn substrip(range: std::ops::Range<usize>, leaf: usize, p_off: usize, coarse: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); coarse];
    for i in range.clone() {
        groups[((i - range.start) % leaf) / p_off].push(i);
    }
    groups
}

struct TileGeometry {
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

fn edge_descriptor(dx: f64, dy: f64, a: f64) -> [f64; EDGE_FEATURES] {
    [dx, dy, (dx * dx + dy * dy).sqrt(), a]
}

/// Runs the network on an explicit graph and returns the emitted factors.
pub fn forward_graph(
    input: &NodeInput,
    a: &CsrMatrix,
    partition: &Arc<HPartition>,
    weights: &ToyNetWeights,
) -> Result<(FactorTensor<f32>, ForwardTrace)> {
    let cfg = weights.config;
    cfg.validate()?;
    let n = input.n();
    if partition.n != n || partition.leaf != cfg.leaf {
        return Err(Error::contract(format!(
            "partition (N = {}, L = {}) does not match the network (N = {n}, L = {})",
            partition.n, partition.leaf, cfg.leaf
        )));
    }
    let (d, heads, leaf, ls, p_off) = (cfg.d, cfg.h, cfg.leaf, cfg.coarse, cfg.p_off());
    let k = partition.k;
    let tiles = partition.num_tiles();

    let mut x = encode(input, a, &cfg, weights)?;

    // grid-unit offsets keep the edge descriptor O(1) at any resolution
    let unit = (n as f64).sqrt();
    let diag = a.diagonal();
    let a_hat = |i: usize, j: usize, v: f64| v / (diag[i] * diag[j]).sqrt();

    let mut diag_desc = Vec::with_capacity(k * leaf * leaf * EDGE_FEATURES);
    let mut local = vec![0.0; leaf * leaf];
    for kk in 0..k {
        let r = partition.leaf_range(kk);
        local.fill(0.0);
        for i in r.clone() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let j = j as usize;
                if r.contains(&j) {
                    local[(i - r.start) * leaf + j - r.start] = a_hat(i, j, v);
                }
            }
        }
        for i in r.clone() {
            for j in r.clone() {
                let dx = (input.pos[j][0] - input.pos[i][0]) * unit;
                let dy = (input.pos[j][1] - input.pos[i][1]) * unit;
                diag_desc.extend(edge_descriptor(dx, dy, local[(i - r.start) * leaf + j - r.start]));
            }
        }
    }

    let geometry: Vec<TileGeometry> = partition
        .tiles
        .iter()
        .map(|t| {
            let rows = t.rows.start * leaf..t.rows.end * leaf;
            let cols = t.cols.start * leaf..t.cols.end * leaf;
            TileGeometry {
                rows: substrip(rows, leaf, p_off, ls),
                cols: substrip(cols, leaf, p_off, ls),
            }
        })
        .collect();

    let mean_pos = |g: &[usize]| {
        let mut p = [0.0; 2];
        for &i in g {
            p[0] += input.pos[i][0];
            p[1] += input.pos[i][1];
        }
        [p[0] / g.len() as f64, p[1] / g.len() as f64]
    };
    let mut tile_desc = Vec::with_capacity(tiles * ls * ls * EDGE_FEATURES);
    let mut coupling = vec![0.0; ls * ls];
    for (t, geo) in partition.tiles.iter().zip(&geometry) {
        let cols = t.cols.start * leaf..t.cols.end * leaf;
        coupling.fill(0.0);
        for (ti, group) in geo.rows.iter().enumerate() {
            for &i in group {
                let (cj, vals) = a.row(i);
                for (&j, &v) in cj.iter().zip(vals) {
                    let j = j as usize;
                    if cols.contains(&j) {
                        let tj = ((j - cols.start) % leaf) / p_off;
                        coupling[ti * ls + tj] += a_hat(i, j, v);
                    }
                }
            }
        }
        for ti in 0..ls {
            let pi = mean_pos(&geo.rows[ti]);
            for tj in 0..ls {
                let pj = mean_pos(&geo.cols[tj]);
                let pairs = (geo.rows[ti].len() * geo.cols[tj].len()) as f64;
                tile_desc.extend(edge_descriptor(
                    (pj[0] - pi[0]) * unit,
                    (pj[1] - pi[1]) * unit,
                    coupling[ti * ls + tj] / pairs,
                ));
            }
        }
    }

    // per-pair head biases, reordered to group x head x t x t
    let to_bias = |desc: &[f64], groups: usize, t: usize, mlp: &Mlp2| {
        let raw = mlp.forward(desc, groups * t * t);
        let mut out = vec![0.0; raw.len()];
        for g in 0..groups {
            for pair in 0..t * t {
                for h in 0..heads {
                    out[(g * heads + h) * t * t + pair] = raw[(g * t * t + pair) * heads + h];
                }
            }
        }
        out
    };
    let diag_bias = to_bias(&diag_desc, k, leaf, &weights.diag_edge);
    let tile_bias = to_bias(&tile_desc, tiles, ls, &weights.tile_edge);

    let mut y = vec![0.0; tiles * ls * d];
    for (m, geo) in geometry.iter().enumerate() {
        for t in 0..ls {
            let out = &mut y[(m * ls + t) * d..(m * ls + t + 1) * d];
            for (group, w) in [(&geo.rows[t], 0.5), (&geo.cols[t], 0.5)] {
                let c = w / group.len() as f64;
                for &i in group {
                    for (o, xi) in out.iter_mut().zip(&x[i * d..(i + 1) * d]) {
                        *o += c * xi;
                    }
                }
            }
        }
    }

    let mut trace = ForwardTrace {
        d,
        layers: Vec::with_capacity(cfg.n_l),
        attention: AttentionCounter::default(),
        max_attention_row_error: 0.0,
    };
    let token_count = (n + tiles * ls) as f64;
    for (db, tb) in weights.diag_blocks.iter().zip(&weights.tile_blocks) {
        let e1 = db.attention(&mut x, k, leaf, heads, &diag_bias);
        trace.attention.leaf_batched += 1;
        let e2 = tb.attention(&mut y, tiles, ls, heads, &tile_bias);
        trace.attention.tile_batched += 1;
        trace.max_attention_row_error = trace.max_attention_row_error.max(e1).max(e2);

        // buffers are rebuilt from zero in every layer
        let mut row = x.clone();
        let mut col = x.clone();
        let mut global = vec![0.0; d];
        for xi in x.chunks(d) {
            for (g, v) in global.iter_mut().zip(xi) {
                *g += v;
            }
        }
        for (m, geo) in geometry.iter().enumerate() {
            for t in 0..ls {
                let tok = &y[(m * ls + t) * d..(m * ls + t + 1) * d];
                for (buf, group) in [(&mut row, &geo.rows[t]), (&mut col, &geo.cols[t])] {
                    let c = 1.0 / group.len() as f64;
                    for &i in group {
                        for (b, v) in buf[i * d..(i + 1) * d].iter_mut().zip(tok) {
                            *b += c * v;
                        }
                    }
                }
                for (g, v) in global.iter_mut().zip(tok) {
                    *g += v;
                }
            }
        }

        let g_mean: Vec<f64> = global.iter().map(|v| v / token_count).collect();
        let mut gathered_x = Vec::with_capacity(n * 3 * d);
        for i in 0..n {
            gathered_x.extend_from_slice(&row[i * d..(i + 1) * d]);
            gathered_x.extend_from_slice(&col[i * d..(i + 1) * d]);
            gathered_x.extend_from_slice(&g_mean);
        }
        let mut gathered_y = vec![0.0; tiles * ls * 3 * d];
        for (m, geo) in geometry.iter().enumerate() {
            for t in 0..ls {
                let out = &mut gathered_y[(m * ls + t) * 3 * d..(m * ls + t + 1) * 3 * d];
                for (slot, (buf, group)) in [(&row, &geo.rows[t]), (&col, &geo.cols[t])].into_iter().enumerate() {
                    let c = 1.0 / group.len() as f64;
                    for &i in group {
                        for (o, b) in out[slot * d..(slot + 1) * d].iter_mut().zip(&buf[i * d..(i + 1) * d]) {
                            *o += c * b;
                        }
                    }
                }
                out[2 * d..].copy_from_slice(&g_mean);
            }
        }

        trace.layers.push(LayerTrace {
            diag_tokens: x.clone(),
            tile_tokens: y.clone(),
            row,
            col,
            global,
        });
        db.ffn(&mut x, &gathered_x);
        tb.ffn(&mut y, &gathered_y);
    }

    let xn = weights.diag_norm.forward(&x);
    let yn = weights.tile_norm.forward(&y);
    let leaf_rows = weights.leaf_head.forward(&xn, n);
    let rb = weights.row_bridge_head.forward(&xn, n);
    let cb = weights.col_bridge_head.forward(&xn, n);
    let gate = weights.gate_head.forward(&xn, n);
    let u = weights.u_head.forward(&yn, tiles * ls);
    let v = weights.v_head.forward(&yn, tiles * ls);

    let mut out = FactorTensor::<f64>::zeros(partition.clone(), ls)?;
    for kk in 0..k {
        let r = partition.leaf_range(kk);
        out.leaf_factor_mut(kk).copy_from_slice(&leaf_rows[r.start * leaf..r.end * leaf]);
        out.row_bridge_mut(kk).copy_from_slice(&rb[r.start * ls..r.end * ls]);
        out.col_bridge_mut(kk).copy_from_slice(&cb[r.start * ls..r.end * ls]);
    }
    for m in 0..tiles {
        let span = m * ls * ls..(m + 1) * ls * ls;
        out.set_tile_from_uv(m, &u[span.clone()], &v[span]);
    }
    out.gate_mut().copy_from_slice(&gate);
    if !out.all_finite() {
        return Err(Error::Numerical("network emitted non-finite factors".into()));
    }
    Ok((out.cast(), trace))
}

/// Encodes a benchmark frame and runs the network on it.
pub fn forward(frame: &Frame, partition: &Arc<HPartition>, weights: &ToyNetWeights) -> Result<FactorTensor<f32>> {
    forward_traced(frame, partition, weights).map(|(f, _)| f)
}

pub fn forward_traced(
    frame: &Frame,
    partition: &Arc<HPartition>,
    weights: &ToyNetWeights,
) -> Result<(FactorTensor<f32>, ForwardTrace)> {
    forward_graph(&NodeInput::from_frame(frame), &frame.a, partition, weights)
}
