//! The four-stage apply chain `y = M x`.
//!
//! Per column of `x` (all columns are processed together, row-major `N x c`):
//!
//! 1. restriction `û_k = Ũ_kᵀ x_k`, `v̂_k = Ṽ_kᵀ x_k`, plus the leaf term `F_k (F_kᵀ x_k)`;
//! 2. strip sums `s^r_m = Σ_{k∈R_m} û_k`, `s^c_m = Σ_{k∈C_m} v̂_k` (accumulated in `f64`);
//! 3. coarse coupling `t^r_m = B_m s^c_m`, `t^c_m = B_mᵀ s^r_m`;
//! 4. prolongation `Δy_k = Ũ_k Σ_{m:k∈R_m} t^r_m + Ṽ_k Σ_{m:k∈C_m} t^c_m`;
//!
//! and finally the gate `λ_i x_i / A_ii` is added.

use super::tensor::FactorTensor;
use crate::error::{Error, Result};
use crate::linalg::{gemm, Accum, Op, Real};
use crate::par::{self, Exec};
use crate::pcg::Preconditioner;

/// Preallocated buffers for applying one partition to up to `cap_cols` columns.
///
/// The intermediates of the last apply stay in the workspace; the training
/// adjoints read them back.
#[derive(Clone, Debug)]
pub struct ApplyWorkspace<T: Real> {
    pub(crate) n: usize,
    pub(crate) leaf: usize,
    pub(crate) coarse: usize,
    pub(crate) k: usize,
    pub(crate) tiles: usize,
    cap_cols: usize,
    pub(crate) ncols: usize,
    /// Input cast to `T`, `N x c`.
    pub(crate) x: Vec<T>,
    /// `F_kᵀ x_k` per leaf.
    pub(crate) w: Vec<T>,
    /// `F_k F_kᵀ x_k` per leaf.
    pub(crate) d: Vec<T>,
    /// `[û_k; v̂_k]` per leaf, `2 L_s x c`.
    pub(crate) hat: Vec<T>,
    pub(crate) strip64: Vec<f64>,
    /// `[s^r_m; s^c_m]` per tile.
    pub(crate) strip: Vec<T>,
    /// `[t^r_m; t^c_m]` per tile.
    pub(crate) coupled: Vec<T>,
    pub(crate) agg64: Vec<f64>,
    /// `[Σ t^r; Σ t^c]` gathered per leaf.
    pub(crate) agg: Vec<T>,
    pub(crate) dy: Vec<T>,
    flops: u64,
}

impl<T: Real> ApplyWorkspace<T> {
    pub fn new(m: &FactorTensor<T>, cap_cols: usize) -> Self {
        let (n, l, ls) = (m.n(), m.leaf(), m.coarse());
        let (k, tiles) = (m.partition().k, m.partition().num_tiles());
        let c = cap_cols.max(1);
        ApplyWorkspace {
            n,
            leaf: l,
            coarse: ls,
            k,
            tiles,
            cap_cols: c,
            ncols: 0,
            x: vec![T::ZERO; n * c],
            w: vec![T::ZERO; n * c],
            d: vec![T::ZERO; n * c],
            hat: vec![T::ZERO; k * 2 * ls * c],
            strip64: vec![0.0; tiles * 2 * ls * c],
            strip: vec![T::ZERO; tiles * 2 * ls * c],
            coupled: vec![T::ZERO; tiles * 2 * ls * c],
            agg64: vec![0.0; k * 2 * ls * c],
            agg: vec![T::ZERO; k * 2 * ls * c],
            dy: vec![T::ZERO; n * c],
            flops: 0,
        }
    }

    pub fn capacity_cols(&self) -> usize {
        self.cap_cols
    }

    /// Sum of all buffer capacities; unchanged by any number of applies.
    pub fn footprint(&self) -> usize {
        self.x.capacity()
            + self.w.capacity()
            + self.d.capacity()
            + self.hat.capacity()
            + self.strip64.capacity()
            + self.strip.capacity()
            + self.coupled.capacity()
            + self.agg64.capacity()
            + self.agg.capacity()
            + self.dy.capacity()
    }

    /// Multiply-adds issued by GEMMs since construction or the last reset.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub fn reset_flops(&mut self) {
        self.flops = 0;
    }

    fn matches(&self, m: &FactorTensor<T>) -> bool {
        self.n == m.n()
            && self.leaf == m.leaf()
            && self.coarse == m.coarse()
            && self.k == m.partition().k
    }
}

/// `y = M x` for a single vector, allocating a fresh workspace.
pub fn apply<T: Real>(m: &FactorTensor<T>, a_diag: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut ws = ApplyWorkspace::new(m, 1);
    let mut y = vec![0.0; x.len()];
    apply_into(Exec::Sequential, m, a_diag, x, 1, &mut ws, &mut y)?;
    Ok(y)
}

/// `Y = M X` for row-major `X` with `ncols` columns, without allocating.
pub fn apply_into<T: Real>(
    exec: Exec,
    m: &FactorTensor<T>,
    a_diag: &[f64],
    x: &[f64],
    ncols: usize,
    ws: &mut ApplyWorkspace<T>,
    y: &mut [f64],
) -> Result<()> {
    let n = m.n();
    if !ws.matches(m) {
        return Err(Error::contract("workspace was built for a different partition"));
    }
    if ncols == 0 || ncols > ws.cap_cols {
        return Err(Error::contract(format!(
            "apply: {ncols} columns requested, workspace holds {}",
            ws.cap_cols
        )));
    }
    if x.len() != n * ncols || y.len() != n * ncols || a_diag.len() != n {
        return Err(Error::contract(format!(
            "apply: expected x, y of length {} and diag of length {n}, got {}, {}, {}",
            n * ncols,
            x.len(),
            y.len(),
            a_diag.len()
        )));
    }
    let c = ncols;
    let (l, ls, k_leaves, tiles) = (ws.leaf, ws.coarse, ws.k, ws.tiles);
    let part = m.partition();
    ws.ncols = c;

    let xs = &mut ws.x[..n * c];
    for (d, s) in xs.iter_mut().zip(x) {
        *d = T::from_f64(*s);
    }
    let xs = &ws.x[..n * c];

    // Stage 1: leaf term and restriction.
    par::for_each_chunk3(
        exec,
        (&mut ws.w[..n * c], l * c),
        (&mut ws.d[..n * c], l * c),
        (&mut ws.hat[..k_leaves * 2 * ls * c], 2 * ls * c),
        |k, w, d, hat| {
            let xk = &xs[k * l * c..(k + 1) * l * c];
            let f = m.leaf_factor(k);
            gemm(Op::T, Op::N, l, c, l, f, xk, w, Accum::Overwrite);
            gemm(Op::N, Op::N, l, c, l, f, w, d, Accum::Overwrite);
            let (uh, vh) = hat.split_at_mut(ls * c);
            gemm(Op::T, Op::N, ls, c, l, m.row_bridge(k), xk, uh, Accum::Overwrite);
            gemm(Op::T, Op::N, ls, c, l, m.col_bridge(k), xk, vh, Accum::Overwrite);
        },
    );

    // Stage 2: strip sums in double precision.
    let hat = &ws.hat[..k_leaves * 2 * ls * c];
    let blk = ls * c;
    par::for_each_chunk2(
        exec,
        &mut ws.strip64[..tiles * 2 * blk],
        2 * blk,
        &mut ws.strip[..tiles * 2 * blk],
        2 * blk,
        |mi, s64, s| {
            let tile = &part.tiles[mi];
            s64.fill(0.0);
            let (sr, sc) = s64.split_at_mut(blk);
            for k in tile.rows.clone() {
                for (a, b) in sr.iter_mut().zip(&hat[k * 2 * blk..k * 2 * blk + blk]) {
                    *a += b.to_f64();
                }
            }
            for k in tile.cols.clone() {
                for (a, b) in sc.iter_mut().zip(&hat[k * 2 * blk + blk..(k + 1) * 2 * blk]) {
                    *a += b.to_f64();
                }
            }
            for (d, v) in s.iter_mut().zip(s64.iter()) {
                *d = T::from_f64(*v);
            }
        },
    );

    // Stage 3: coarse coupling, t^r = B s^c and t^c = Bᵀ s^r.
    let strip = &ws.strip[..tiles * 2 * blk];
    par::for_each_chunk(exec, &mut ws.coupled[..tiles * 2 * blk], 2 * blk, |mi, t| {
        let s = &strip[mi * 2 * blk..(mi + 1) * 2 * blk];
        let (sr, sc) = s.split_at(blk);
        let (tr, tc) = t.split_at_mut(blk);
        let b = m.tile_factor(mi);
        gemm(Op::N, Op::N, ls, c, ls, b, sc, tr, Accum::Overwrite);
        gemm(Op::T, Op::N, ls, c, ls, b, sr, tc, Accum::Overwrite);
    });

    // Stage 4: gather per leaf and prolongate.
    let coupled = &ws.coupled[..tiles * 2 * blk];
    par::for_each_chunk3(
        exec,
        (&mut ws.agg64[..k_leaves * 2 * blk], 2 * blk),
        (&mut ws.agg[..k_leaves * 2 * blk], 2 * blk),
        (&mut ws.dy[..n * c], l * c),
        |k, a64, a, dy| {
            a64.fill(0.0);
            let (ar, ac) = a64.split_at_mut(blk);
            for &mi in &part.row_tiles[k] {
                for (s, v) in ar.iter_mut().zip(&coupled[mi * 2 * blk..mi * 2 * blk + blk]) {
                    *s += v.to_f64();
                }
            }
            for &mi in &part.col_tiles[k] {
                for (s, v) in ac
                    .iter_mut()
                    .zip(&coupled[mi * 2 * blk + blk..(mi + 1) * 2 * blk])
                {
                    *s += v.to_f64();
                }
            }
            for (d, v) in a.iter_mut().zip(a64.iter()) {
                *d = T::from_f64(*v);
            }
            let (ar, ac) = a.split_at(blk);
            gemm(Op::N, Op::N, l, c, ls, m.row_bridge(k), ar, dy, Accum::Overwrite);
            gemm(Op::N, Op::N, l, c, ls, m.col_bridge(k), ac, dy, Accum::Add);
        },
    );

    // Sum the three terms in double precision, gate last.
    let (d, dy) = (&ws.d[..n * c], &ws.dy[..n * c]);
    let gate = m.gate();
    const ROWS: usize = 64;
    par::for_each_chunk(exec, y, ROWS * c, |chunk, ys| {
        for (r, yrow) in ys.chunks_mut(c).enumerate() {
            let i = chunk * ROWS + r;
            let (g, di) = (gate[i].to_f64(), a_diag[i]);
            let o = i * c;
            for j in 0..c {
                yrow[j] = (d[o + j].to_f64() + dy[o + j].to_f64()) + g * x[o + j] / di;
            }
        }
    });

    let per_leaf = 2 * l * l + 4 * l * ls;
    let per_tile = 2 * ls * ls;
    ws.flops += (c * (k_leaves * per_leaf + tiles * per_tile)) as u64;
    Ok(())
}

/// Single-vector applier holding its own workspace, for use inside PCG.
pub struct FactorApplier<'a, T: Real = f32> {
    factors: &'a FactorTensor<T>,
    a_diag: Vec<f64>,
    ws: ApplyWorkspace<T>,
    /// Optional extra `softplus(θ) D⁻¹ r` term.
    shift: f64,
}

impl<'a, T: Real> FactorApplier<'a, T> {
    pub fn new(factors: &'a FactorTensor<T>, a_diag: &[f64]) -> Result<Self> {
        if a_diag.len() != factors.n() {
            return Err(Error::contract("diagonal length differs from factor size"));
        }
        if a_diag.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::contract("operator diagonal must be positive"));
        }
        Ok(FactorApplier {
            factors,
            a_diag: a_diag.to_vec(),
            ws: ApplyWorkspace::new(factors, 1),
            shift: 0.0,
        })
    }

    /// Adds `softplus(theta) D⁻¹` to the operator, pushing it toward SPD.
    pub fn with_softplus_shift(mut self, theta: f64) -> Self {
        self.shift = if theta > 30.0 {
            theta
        } else {
            theta.exp().ln_1p()
        };
        self
    }

    pub fn workspace(&self) -> &ApplyWorkspace<T> {
        &self.ws
    }
}

impl<T: Real> Preconditioner for FactorApplier<'_, T> {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()> {
        apply_into(Exec::Sequential, self.factors, &self.a_diag, r, 1, &mut self.ws, z)?;
        if self.shift != 0.0 {
            for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.a_diag) {
                *zi += self.shift * ri / di;
            }
        }
        Ok(())
    }

    fn name(&self) -> &str {
        "hfactor"
    }
}
