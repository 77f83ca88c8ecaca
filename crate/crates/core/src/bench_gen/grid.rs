use crate::error::{Error, Result};
use crate::linalg::morton_encode;

/// `(W, H)` with `W = ceil(sqrt(N))` and `H = ceil(N / W)`.
pub fn grid_dims(n: usize) -> (usize, usize) {
    let mut w = (n as f64).sqrt() as usize;
    while w * w < n {
        w += 1;
    }
    while w > 0 && (w - 1) * (w - 1) >= n {
        w -= 1;
    }
    let w = w.max(1);
    (w, n.div_ceil(w))
}

/// The retained cells of a `W x H` grid, in Morton order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    pub n: usize,
    pub width: usize,
    pub height: usize,
    /// Linear cell id `y * W + x` of each degree of freedom.
    pub cells: Vec<u32>,
    /// Degree of freedom of each linear cell id, `u32::MAX` for dropped cells.
    pub dof_of_cell: Vec<u32>,
}

impl Grid {
    pub fn new(n: usize) -> Result<Grid> {
        if n < 4 {
            return Err(Error::config(format!("grid needs N >= 4, got {n}")));
        }
        if n > 1 << 30 {
            return Err(Error::config(format!("N = {n} is too large")));
        }
        let (width, height) = grid_dims(n);
        let mut all: Vec<(u64, u32)> = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| (morton_encode(x as u32, y as u32), (y * width + x) as u32))
            .collect();
        all.sort_unstable();
        let cells: Vec<u32> = all.iter().take(n).map(|&(_, c)| c).collect();
        let mut dof_of_cell = vec![u32::MAX; width * height];
        for (dof, &c) in cells.iter().enumerate() {
            dof_of_cell[c as usize] = dof as u32;
        }
        Ok(Grid {
            n,
            width,
            height,
            cells,
            dof_of_cell,
        })
    }

    pub fn coords(&self, dof: usize) -> (usize, usize) {
        let c = self.cells[dof] as usize;
        (c % self.width, c / self.width)
    }

    /// Cell center in the unit square, `((x + 0.5) / W, (y + 0.5) / H)`.
    pub fn position(&self, dof: usize) -> (f64, f64) {
        let (x, y) = self.coords(dof);
        (
            (x as f64 + 0.5) / self.width as f64,
            (y as f64 + 0.5) / self.height as f64,
        )
    }

    pub fn dof_at(&self, x: isize, y: isize) -> Option<usize> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return None;
        }
        let d = self.dof_of_cell[y as usize * self.width + x as usize];
        (d != u32::MAX).then_some(d as usize)
    }

    /// Retained face neighbours of `dof` (left, right, down, up order).
    pub fn neighbors(&self, dof: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = self.coords(dof);
        let (x, y) = (x as isize, y as isize);
        [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
            .into_iter()
            .filter_map(move |(i, j)| self.dof_at(i, j))
    }
}
