//! Reverse-mode adjoints of the apply chain (double precision).
//!
//! With `G = ∂L/∂Y` and the forward intermediates of `Y = M X`:
//!
//! * gate: `∂λ_i = Σ_j G_ij X_ij / A_ii`
//! * leaf: `∂F_k = G_k (F_kᵀ X_k)ᵀ + X_k (F_kᵀ G_k)ᵀ`
//! * prolongation: `∂Ũ_k += G_k a^rᵀ_k`, `ḡa^r_k = Ũ_kᵀ G_k` (same for `Ṽ_k`, `a^c_k`)
//! * gather: `ḡt^r_m = Σ_{k∈R_m} ḡa^r_k`, `ḡt^c_m = Σ_{k∈C_m} ḡa^c_k`
//! * coupling: `∂B_m = ḡt^r s^cᵀ + s^r ḡt^cᵀ`, `ḡs^c = B_mᵀ ḡt^r`, `ḡs^r = B_m ḡt^c`
//! * strip sums: `ḡû_k = Σ_{m:k∈R_m} ḡs^r_m`, `ḡv̂_k = Σ_{m:k∈C_m} ḡs^c_m`
//! * restriction: `∂Ũ_k += X_k ḡûᵀ_k`, `∂Ṽ_k += X_k ḡv̂ᵀ_k`

use crate::error::{Error, Result};
use crate::factors::{apply_into, ApplyWorkspace, FactorTensor};
use crate::linalg::{gemm, Accum, CsrMatrix, Op};
use crate::par::{self, Exec};

use super::loss::cosine_loss_grad;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossChoice {
    Cosine,
    Sai,
}

/// Scratch buffers for [`apply_backward`].
#[derive(Clone, Debug)]
pub struct GradWorkspace {
    cap_cols: usize,
    leaf_scratch: Vec<f64>,
    tile_scratch: Vec<f64>,
    ghat: Vec<f64>,
}

impl GradWorkspace {
    pub fn new(m: &FactorTensor<f64>, cap_cols: usize) -> Self {
        let c = cap_cols.max(1);
        let (l, ls) = (m.leaf(), m.coarse());
        let (k, tiles) = (m.partition().k, m.partition().num_tiles());
        GradWorkspace {
            cap_cols: c,
            leaf_scratch: vec![0.0; k * (l + 2 * ls) * c],
            tile_scratch: vec![0.0; tiles * 4 * ls * c],
            ghat: vec![0.0; k * 2 * ls * c],
        }
    }
}

/// Writes `∂L/∂θ` into `grad` given `G = ∂L/∂Y` for the apply recorded in `ws`.
pub fn apply_backward(
    exec: Exec,
    m: &FactorTensor<f64>,
    a_diag: &[f64],
    ws: &ApplyWorkspace<f64>,
    g: &[f64],
    gws: &mut GradWorkspace,
    grad: &mut FactorTensor<f64>,
) -> Result<()> {
    let n = m.n();
    let c = ws.ncols;
    if c == 0 || c > gws.cap_cols || g.len() != n * c {
        return Err(Error::contract("apply_backward: G does not match the recorded apply"));
    }
    if grad.len() != m.len() || grad.n() != n {
        return Err(Error::contract("apply_backward: gradient tensor has the wrong layout"));
    }
    let (l, ls) = (m.leaf(), m.coarse());
    let part = m.partition();
    let (kl, tiles) = (part.k, part.num_tiles());
    let blk = ls * c;
    let layout = *m.layout();
    let x = &ws.x[..n * c];
    let w = &ws.w[..n * c];
    let agg = &ws.agg[..kl * 2 * blk];
    let strip = &ws.strip[..tiles * 2 * blk];

    let data = grad.as_mut_slice();
    let (leaf_sec, rest) = data.split_at_mut(layout.tile_offset);
    let (tile_sec, rest) = rest.split_at_mut(layout.bridge_offset - layout.tile_offset);
    let (bridge_sec, gate_sec) = rest.split_at_mut(layout.gate_offset - layout.bridge_offset);

    // Leaf factors, prolongation bridges, and Ũᵀ G / Ṽᵀ G.
    let lsz = (l + 2 * ls) * c;
    par::for_each_chunk3(
        exec,
        (leaf_sec, l * l),
        (&mut bridge_sec[..], 2 * l * ls),
        (&mut gws.leaf_scratch[..kl * lsz], lsz),
        |k, df, db, scratch| {
            let gk = &g[k * l * c..(k + 1) * l * c];
            let xk = &x[k * l * c..(k + 1) * l * c];
            let wk = &w[k * l * c..(k + 1) * l * c];
            let f = m.leaf_factor(k);
            let (q, ga) = scratch.split_at_mut(l * c);
            gemm(Op::T, Op::N, l, c, l, f, gk, q, Accum::Overwrite);
            gemm(Op::N, Op::T, l, l, c, gk, wk, df, Accum::Overwrite);
            gemm(Op::N, Op::T, l, l, c, xk, q, df, Accum::Add);

            let (du, dv) = db.split_at_mut(l * ls);
            let ak = &agg[k * 2 * blk..(k + 1) * 2 * blk];
            let (ar, ac) = ak.split_at(blk);
            gemm(Op::N, Op::T, l, ls, c, gk, ar, du, Accum::Overwrite);
            gemm(Op::N, Op::T, l, ls, c, gk, ac, dv, Accum::Overwrite);
            let (gar, gac) = ga.split_at_mut(blk);
            gemm(Op::T, Op::N, ls, c, l, m.row_bridge(k), gk, gar, Accum::Overwrite);
            gemm(Op::T, Op::N, ls, c, l, m.col_bridge(k), gk, gac, Accum::Overwrite);
        },
    );

    // Coupling factors and strip-sum adjoints.
    let leaf_scratch = &gws.leaf_scratch[..kl * lsz];
    let ga_of = |k: usize| &leaf_scratch[k * lsz + l * c..(k + 1) * lsz];
    par::for_each_chunk2(
        exec,
        tile_sec,
        ls * ls,
        &mut gws.tile_scratch[..tiles * 4 * blk],
        4 * blk,
        |mi, db, scratch| {
            let tile = &part.tiles[mi];
            let (gt, gs) = scratch.split_at_mut(2 * blk);
            gt.fill(0.0);
            let (gtr, gtc) = gt.split_at_mut(blk);
            for k in tile.rows.clone() {
                for (a, b) in gtr.iter_mut().zip(&ga_of(k)[..blk]) {
                    *a += b;
                }
            }
            for k in tile.cols.clone() {
                for (a, b) in gtc.iter_mut().zip(&ga_of(k)[blk..]) {
                    *a += b;
                }
            }
            let s = &strip[mi * 2 * blk..(mi + 1) * 2 * blk];
            let (sr, sc) = s.split_at(blk);
            let b = m.tile_factor(mi);
            gemm(Op::N, Op::T, ls, ls, c, gtr, sc, db, Accum::Overwrite);
            gemm(Op::N, Op::T, ls, ls, c, sr, gtc, db, Accum::Add);
            let (gsr, gsc) = gs.split_at_mut(blk);
            gemm(Op::N, Op::N, ls, c, ls, b, gtc, gsr, Accum::Overwrite);
            gemm(Op::T, Op::N, ls, c, ls, b, gtr, gsc, Accum::Overwrite);
        },
    );

    // Restriction bridges.
    let tile_scratch = &gws.tile_scratch[..tiles * 4 * blk];
    par::for_each_chunk2(
        exec,
        bridge_sec,
        2 * l * ls,
        &mut gws.ghat[..kl * 2 * blk],
        2 * blk,
        |k, db, gh| {
            gh.fill(0.0);
            let (gu, gv) = gh.split_at_mut(blk);
            for &mi in &part.row_tiles[k] {
                let o = mi * 4 * blk + 2 * blk;
                for (a, b) in gu.iter_mut().zip(&tile_scratch[o..o + blk]) {
                    *a += b;
                }
            }
            for &mi in &part.col_tiles[k] {
                let o = mi * 4 * blk + 3 * blk;
                for (a, b) in gv.iter_mut().zip(&tile_scratch[o..o + blk]) {
                    *a += b;
                }
            }
            let xk = &x[k * l * c..(k + 1) * l * c];
            let (du, dv) = db.split_at_mut(l * ls);
            gemm(Op::N, Op::T, l, ls, c, xk, gu, du, Accum::Add);
            gemm(Op::N, Op::T, l, ls, c, xk, gv, dv, Accum::Add);
        },
    );

    for (i, dl) in gate_sec.iter_mut().enumerate() {
        let row = i * c;
        let s: f64 = (0..c).map(|j| g[row + j] * x[row + j]).sum();
        *dl = s / a_diag[i];
    }
    Ok(())
}

/// Loss and gradient for probes `z` (row-major, `ncols` columns), allocating
/// all buffers. For the SAI loss, `norm_a` must be given.
pub fn loss_gradient(
    m: &FactorTensor<f64>,
    a: &CsrMatrix,
    z: &[f64],
    ncols: usize,
    loss: LossChoice,
    norm_a: Option<f64>,
    exec: Exec,
) -> Result<(f64, FactorTensor<f64>)> {
    let n = m.n();
    if z.len() != n * ncols {
        return Err(Error::contract("probe matrix has the wrong size"));
    }
    let diag = a.diagonal();
    let mut ws = ApplyWorkspace::new(m, ncols);
    let mut gws = GradWorkspace::new(m, ncols);
    let mut grad = FactorTensor::zeros(m.partition_arc().clone(), m.coarse())?;
    let mut y = vec![0.0; n * ncols];
    let mut gy = vec![0.0; n * ncols];
    let value = match loss {
        LossChoice::Cosine => {
            let mut x = vec![0.0; n * ncols];
            a.spmm_into(exec, z, ncols, &mut x)?;
            apply_into(exec, m, &diag, &x, ncols, &mut ws, &mut y)?;
            cosine_loss_grad(z, &y, 1.0, &mut gy)?
        }
        LossChoice::Sai => {
            let na = norm_a.ok_or_else(|| Error::contract("SAI gradient needs ‖A‖"))?;
            apply_into(exec, m, &diag, z, ncols, &mut ws, &mut y)?;
            sai_grad(a, z, &y, ncols, na, &mut gy, 1.0, exec)?
        }
    };
    apply_backward(exec, m, &diag, &ws, &gy, &mut gws, &mut grad)?;
    Ok((value, grad))
}

/// SAI loss for `W = M Z` and `scale · ∂L/∂W = scale · (2/c) A (A W / c − Z)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sai_grad(
    a: &CsrMatrix,
    z: &[f64],
    w: &[f64],
    ncols: usize,
    norm_a: f64,
    g: &mut [f64],
    scale: f64,
    exec: Exec,
) -> Result<f64> {
    let mut e = vec![0.0; w.len()];
    a.spmm_into(exec, w, ncols, &mut e)?;
    let mut value = 0.0;
    for (ei, zi) in e.iter_mut().zip(z) {
        *ei = *ei / norm_a - zi;
        value += *ei * *ei;
    }
    a.spmm_into(exec, &e, ncols, g)?;
    let f = scale * 2.0 / norm_a;
    g.iter_mut().for_each(|v| *v *= f);
    Ok(value)
}
