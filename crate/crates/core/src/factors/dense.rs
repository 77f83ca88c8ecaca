use super::apply::apply;
use super::tensor::FactorTensor;
use crate::error::{Error, Result};
use crate::linalg::{DenseMat, Real, DENSE_CAP};

fn to64<T: Real>(s: &[T]) -> Vec<f64> {
    s.iter().map(|v| v.to_f64()).collect()
}

/// The operator `M` as a dense `N x N` matrix, computed in `f64`.
pub fn assemble_dense<T: Real>(m: &FactorTensor<T>, a_diag: &[f64]) -> Result<DenseMat<f64>> {
    let n = m.n();
    if n > DENSE_CAP {
        return Err(Error::config(format!(
            "dense assembly refused: N = {n} exceeds the cap {DENSE_CAP}"
        )));
    }
    if a_diag.len() != n {
        return Err(Error::contract("diagonal length differs from factor size"));
    }
    let (l, ls) = (m.leaf(), m.coarse());
    let part = m.partition();
    let mut out = DenseMat::<f64>::zeros(n, n);

    for k in 0..part.k {
        let f = DenseMat::from_vec(l, l, to64(m.leaf_factor(k)))?;
        let ff = f.matmul(&f.transpose())?;
        let o = k * l;
        for i in 0..l {
            for j in 0..l {
                out[(o + i, o + j)] = ff[(i, j)];
            }
        }
    }

    for tile in &part.tiles {
        let b = DenseMat::from_vec(ls, ls, to64(m.tile_factor(tile.id)))?;
        for kr in tile.rows.clone() {
            let ub = DenseMat::from_vec(l, ls, to64(m.row_bridge(kr)))?.matmul(&b)?;
            for kc in tile.cols.clone() {
                let vt = DenseMat::from_vec(l, ls, to64(m.col_bridge(kc)))?.transpose();
                let blk = ub.matmul(&vt)?;
                for i in 0..l {
                    for j in 0..l {
                        out[(kr * l + i, kc * l + j)] = blk[(i, j)];
                        out[(kc * l + j, kr * l + i)] = blk[(i, j)];
                    }
                }
            }
        }
    }

    for (i, (g, d)) in m.gate().iter().zip(a_diag).enumerate() {
        out[(i, i)] += g.to_f64() / d;
    }
    Ok(out)
}

/// `‖apply(M, r) − M_dense r‖ / ‖M_dense r‖`.
pub fn apply_transposed_tiles_check<T: Real>(
    m: &FactorTensor<T>,
    a_diag: &[f64],
    r: &[f64],
) -> Result<f64> {
    let dense = assemble_dense(m, a_diag)?;
    let want = dense.matvec(r)?;
    let got = apply(m, a_diag, r)?;
    let num: f64 = got.iter().zip(&want).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = want.iter().map(|v| v * v).sum();
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}
