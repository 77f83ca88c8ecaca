use serde::{Deserialize, Serialize};

use crate::linalg::{gemm, Accum, Op, RngStream};

/// Affine map on row-major token matrices, `y = x W + b` with `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            fan_in,
            fan_out,
            w: vec![0.0; fan_in * fan_out],
            b: vec![0.0; fan_out],
        }
    }

    /// Normal weights with standard deviation `1/sqrt(fan_in)`, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, stream: &mut RngStream) -> Self {
        let mut l = Self::zeros(fan_in, fan_out);
        let s = 1.0 / (fan_in.max(1) as f64).sqrt();
        for w in &mut l.w {
            *w = s * stream.normal();
        }
        l
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), rows * self.fan_in);
        let mut y = Vec::with_capacity(rows * self.fan_out);
        for _ in 0..rows {
            y.extend_from_slice(&self.b);
        }
        gemm(Op::N, Op::N, rows, self.fan_out, self.fan_in, x, &self.w, &mut y, Accum::Add);
        y
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.w.iter().chain(&self.b).all(|v| v.is_finite())
    }
}

/// Two affine maps with a GELU in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp2 {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp2 {
    pub fn zeros(fan_in: usize, hidden: usize, fan_out: usize) -> Self {
        Mlp2 {
            l1: Linear::zeros(fan_in, hidden),
            l2: Linear::zeros(hidden, fan_out),
        }
    }

    pub fn init(fan_in: usize, hidden: usize, fan_out: usize, stream: &mut RngStream) -> Self {
        Mlp2 {
            l1: Linear::init(fan_in, hidden, stream),
            l2: Linear::init(hidden, fan_out, stream),
        }
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut h = self.l1.forward(x, rows);
        h.iter_mut().for_each(|v| *v = gelu(*v));
        self.l2.forward(&h, rows)
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.l1.all_finite() && self.l2.all_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(d: usize) -> Self {
        LayerNorm {
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
        }
    }

    pub fn zeros(d: usize) -> Self {
        LayerNorm {
            gamma: vec![0.0; d],
            beta: vec![0.0; d],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let d = self.gamma.len();
        let mut y = vec![0.0; x.len()];
        for (row, out) in x.chunks(d).zip(y.chunks_mut(d)) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + Self::EPS).sqrt();
            for j in 0..d {
                out[j] = (row[j] - mean) * inv * self.gamma[j] + self.beta[j];
            }
        }
        y
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.gamma.iter().chain(&self.beta).all(|v| v.is_finite())
    }
}

/// Tanh approximation of the Gaussian error linear unit.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Pre-norm transformer block: attention sublayer, then a FFN whose input is the
/// normalized token concatenated with three gathered highway slices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub ln_attn: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln_ffn: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

impl Block {
    pub fn zeros(d: usize) -> Self {
        Block {
            ln_attn: LayerNorm::zeros(d),
            q: Linear::zeros(d, d),
            k: Linear::zeros(d, d),
            v: Linear::zeros(d, d),
            o: Linear::zeros(d, d),
            ln_ffn: LayerNorm::zeros(d),
            ffn_in: Linear::zeros(4 * d, 4 * d),
            ffn_out: Linear::zeros(4 * d, d),
        }
    }

    pub fn init(d: usize, stream: &mut RngStream) -> Self {
        Block {
            ln_attn: LayerNorm::new(d),
            q: Linear::init(d, d, stream),
            k: Linear::init(d, d, stream),
            v: Linear::init(d, d, stream),
            o: Linear::init(d, d, stream),
            ln_ffn: LayerNorm::new(d),
            ffn_in: Linear::init(4 * d, 4 * d, stream),
            ffn_out: Linear::init(4 * d, d, stream),
        }
    }

    /// `x += MHA(LN(x))` over `groups` independent windows of `t` tokens.
    ///
    /// `bias` holds `groups x heads x t x t` additive logits. Returns the largest
    /// deviation of an attention row sum from one.
    pub fn attention(&self, x: &mut [f64], groups: usize, t: usize, heads: usize, bias: &[f64]) -> f64 {
        let d = self.q.fan_in;
        let rows = groups * t;
        let y = self.ln_attn.forward(x);
        let (q, k, v) = (self.q.forward(&y, rows), self.k.forward(&y, rows), self.v.forward(&y, rows));
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = vec![0.0; rows * d];
        let mut p = vec![0.0; t];
        let mut worst = 0.0f64;
        for g in 0..groups {
            for h in 0..heads {
                let bias_gh = &bias[(g * heads + h) * t * t..(g * heads + h + 1) * t * t];
                for i in 0..t {
                    let qi = &q[(g * t + i) * d + h * dh..][..dh];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..t {
                        let kj = &k[(g * t + j) * d + h * dh..][..dh];
                        let s = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() + bias_gh[i * t + j];
                        p[j] = s;
                        max = max.max(s);
                    }
                    let mut z = 0.0;
                    for pj in p.iter_mut() {
                        *pj = (*pj - max).exp();
                        z += *pj;
                    }
                    let mut total = 0.0;
                    let out = &mut ctx[(g * t + i) * d + h * dh..][..dh];
                    for j in 0..t {
                        let w = p[j] / z;
                        total += w;
                        let vj = &v[(g * t + j) * d + h * dh..][..dh];
                        for (o, vv) in out.iter_mut().zip(vj) {
                            *o += w * vv;
                        }
                    }
                    worst = worst.max((total - 1.0).abs());
                }
            }
        }
        let out = self.o.forward(&ctx, rows);
        for (xi, oi) in x.iter_mut().zip(&out) {
            *xi += oi;
        }
        worst
    }

    /// `x += FFN([LN(x), gathered])` where `gathered` is `rows x 3d`.
    pub fn ffn(&self, x: &mut [f64], gathered: &[f64]) {
        let d = self.q.fan_in;
        let rows = x.len() / d;
        let y = self.ln_ffn.forward(x);
        let mut cat = Vec::with_capacity(rows * 4 * d);
        for r in 0..rows {
            cat.extend_from_slice(&y[r * d..(r + 1) * d]);
            cat.extend_from_slice(&gathered[r * 3 * d..(r + 1) * 3 * d]);
        }
        let mut h = self.ffn_in.forward(&cat, rows);
        h.iter_mut().for_each(|v| *v = gelu(*v));
        let out = self.ffn_out.forward(&h, rows);
        for (xi, oi) in x.iter_mut().zip(&out) {
            *xi += oi;
        }
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.ln_attn.all_finite()
            && [&self.q, &self.k, &self.v, &self.o, &self.ffn_in, &self.ffn_out]
                .iter()
                .all(|l| l.all_finite())
            && self.ln_ffn.all_finite()
    }
}
