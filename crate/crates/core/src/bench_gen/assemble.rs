use super::grid::Grid;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Harmonic-mean face conductance `2 ρ_i ρ_j / (ρ_i + ρ_j)`.
#[inline]
pub fn face_weight(rho_i: f64, rho_j: f64) -> f64 {
    2.0 * rho_i * rho_j / (rho_i + rho_j)
}

/// Neumann 5-point operator in the grid's Morton order.
///
/// Faces to cells outside the grid or dropped by truncation contribute nothing.
pub fn assemble_operator(rho: &[f64], grid: &Grid) -> Result<CsrMatrix> {
    if rho.len() != grid.n {
        return Err(Error::contract(format!(
            "density has {} entries for {} cells",
            rho.len(),
            grid.n
        )));
    }
    super::check_positive(rho)?;
    let n = grid.n;
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    row_offsets.push(0);
    let mut entries: Vec<(u32, f64)> = Vec::with_capacity(5);
    for i in 0..n {
        entries.clear();
        let mut diag = 0.0;
        for j in grid.neighbors(i) {
            let w = face_weight(rho[i], rho[j]);
            diag += w;
            entries.push((j as u32, -w));
        }
        entries.push((i as u32, diag));
        entries.sort_unstable_by_key(|e| e.0);
        for &(j, v) in &entries {
            col_indices.push(j);
            values.push(v);
        }
        row_offsets.push(col_indices.len());
    }
    CsrMatrix::new(n, n, row_offsets, col_indices, values)
}
