//! Weak-admissibility block partition and the packed factor layout.
//!
//! `[0, K)` leaves are bisected recursively; each internal node of the tree
//! couples its left half (rows) to its right half (columns) through one
//! off-diagonal tile. Tiles are numbered breadth-first, so tile 0 is the
//! largest.

use std::collections::VecDeque;
use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TileSpec {
    pub id: usize,
    /// Side length in leaves.
    pub span: usize,
    /// Leaf range of the tile's rows (left half).
    pub rows: Range<usize>,
    /// Leaf range of the tile's columns (right half).
    pub cols: Range<usize>,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HPartition {
    pub n: usize,
    pub leaf: usize,
    pub k: usize,
    pub eta: f64,
    pub tiles: Vec<TileSpec>,
    /// For each leaf, the tiles whose row range contains it (root first).
    pub row_tiles: Vec<Vec<usize>>,
    /// For each leaf, the tiles whose column range contains it (root first).
    pub col_tiles: Vec<Vec<usize>>,
}

/// Which stored block covers the `(leaf_row, leaf_col)` block of `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockOwner {
    Leaf(usize),
    Tile(usize),
    TileTransposed(usize),
}

/// Leaf size actually used for `n`: small systems get `min(L, N/2)` so that
/// at least two leaves exist.
pub fn effective_leaf(n: usize, leaf: usize) -> usize {
    if n < 2 * leaf {
        (n / 2).max(1)
    } else {
        leaf
    }
}

impl HPartition {
    pub fn build(n: usize, leaf: usize) -> Result<HPartition> {
        if leaf == 0 || !n.is_multiple_of(leaf) {
            return Err(Error::config(format!(
                "N = {n} is not divisible by the leaf size L = {leaf}"
            )));
        }
        let k = n / leaf;
        if k < 2 || !k.is_power_of_two() {
            return Err(Error::config(format!(
                "leaf count K = N/L = {k} must be a power of two >= 2"
            )));
        }
        let mut tiles = Vec::with_capacity(k - 1);
        let mut queue = VecDeque::from([(0usize, k, 0usize)]);
        while let Some((lo, hi, depth)) = queue.pop_front() {
            if hi - lo < 2 {
                continue;
            }
            let mid = (lo + hi) / 2;
            tiles.push(TileSpec {
                id: tiles.len(),
                span: mid - lo,
                rows: lo..mid,
                cols: mid..hi,
                depth,
            });
            queue.push_back((lo, mid, depth + 1));
            queue.push_back((mid, hi, depth + 1));
        }
        let mut row_tiles = vec![Vec::new(); k];
        let mut col_tiles = vec![Vec::new(); k];
        for t in &tiles {
            for leaf_id in t.rows.clone() {
                row_tiles[leaf_id].push(t.id);
            }
            for leaf_id in t.cols.clone() {
                col_tiles[leaf_id].push(t.id);
            }
        }
        Ok(HPartition {
            n,
            leaf,
            k,
            eta: 1.0,
            tiles,
            row_tiles,
            col_tiles,
        })
    }

    /// [`HPartition::build`] with the leaf size clamped by [`effective_leaf`].
    pub fn build_clamped(n: usize, leaf: usize) -> Result<HPartition> {
        Self::build(n, effective_leaf(n, leaf))
    }

    pub fn num_tiles(&self) -> usize {
        self.tiles.len()
    }

    pub fn leaf_range(&self, k: usize) -> Range<usize> {
        k * self.leaf..(k + 1) * self.leaf
    }

    pub fn depth(&self) -> usize {
        self.k.trailing_zeros() as usize
    }

    pub fn block_owner(&self, leaf_row: usize, leaf_col: usize) -> BlockOwner {
        if leaf_row == leaf_col {
            return BlockOwner::Leaf(leaf_row);
        }
        let (lo, hi) = (leaf_row.min(leaf_col), leaf_row.max(leaf_col));
        let m = *self.row_tiles[lo]
            .iter()
            .find(|&&m| self.tiles[m].cols.contains(&hi))
            .expect("every off-diagonal leaf pair lies in exactly one tile");
        if leaf_row < leaf_col {
            BlockOwner::Tile(m)
        } else {
            BlockOwner::TileTransposed(m)
        }
    }

    pub fn layout(&self, coarse: usize) -> Result<PackedLayout> {
        PackedLayout::new(self, coarse)
    }

    /// JSON description of leaves, tiles and packed offsets.
    pub fn describe(&self, coarse: usize) -> Result<serde_json::Value> {
        let layout = self.layout(coarse)?;
        let leaves: Vec<_> = (0..self.k).map(|k| self.leaf_range(k)).collect();
        Ok(serde_json::json!({
            "n": self.n,
            "leaf": self.leaf,
            "k": self.k,
            "eta": self.eta,
            "leaves": leaves,
            "tiles": self.tiles,
            "layout": layout,
        }))
    }
}

/// Element offsets of the four contiguous sections of a packed factor tensor:
/// `[F_k | B_m | (Ũ_k, Ṽ_k) per leaf | λ]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PackedLayout {
    pub n: usize,
    pub leaf: usize,
    pub coarse: usize,
    pub k: usize,
    pub tiles: usize,
    pub leaf_offset: usize,
    pub tile_offset: usize,
    pub bridge_offset: usize,
    pub gate_offset: usize,
    pub width: usize,
}

impl PackedLayout {
    pub fn new(p: &HPartition, coarse: usize) -> Result<Self> {
        if coarse == 0 || !p.leaf.is_multiple_of(coarse) {
            return Err(Error::config(format!(
                "coarse token count L_s = {coarse} must divide L = {}",
                p.leaf
            )));
        }
        let (l, ls) = (p.leaf, coarse);
        let leaf_offset = 0;
        let tile_offset = leaf_offset + p.k * l * l;
        let bridge_offset = tile_offset + p.num_tiles() * ls * ls;
        let gate_offset = bridge_offset + 2 * p.n * ls;
        Ok(PackedLayout {
            n: p.n,
            leaf: l,
            coarse: ls,
            k: p.k,
            tiles: p.num_tiles(),
            leaf_offset,
            tile_offset,
            bridge_offset,
            gate_offset,
            width: gate_offset + p.n,
        })
    }

    pub fn leaf_factor(&self, k: usize) -> Range<usize> {
        let s = self.leaf_offset + k * self.leaf * self.leaf;
        s..s + self.leaf * self.leaf
    }

    pub fn tile_factor(&self, m: usize) -> Range<usize> {
        let s = self.tile_offset + m * self.coarse * self.coarse;
        s..s + self.coarse * self.coarse
    }

    /// `Ũ_k`, stored `L x L_s` row-major.
    pub fn row_bridge(&self, k: usize) -> Range<usize> {
        let s = self.bridge_offset + 2 * k * self.leaf * self.coarse;
        s..s + self.leaf * self.coarse
    }

    /// `Ṽ_k`, stored `L x L_s` row-major right after `Ũ_k`.
    pub fn col_bridge(&self, k: usize) -> Range<usize> {
        let s = self.bridge_offset + (2 * k + 1) * self.leaf * self.coarse;
        s..s + self.leaf * self.coarse
    }

    pub fn gate(&self) -> Range<usize> {
        self.gate_offset..self.width
    }

    pub fn leaf_section(&self) -> Range<usize> {
        self.leaf_offset..self.tile_offset
    }

    pub fn tile_section(&self) -> Range<usize> {
        self.tile_offset..self.bridge_offset
    }

    pub fn bridge_section(&self) -> Range<usize> {
        self.bridge_offset..self.gate_offset
    }
}

/// `P = K L² + M_H L_s² + 2 N L_s + N` for a partition of `n` with leaf `l`.
pub fn packed_width(p: &HPartition, coarse: usize) -> Result<usize> {
    Ok(p.layout(coarse)?.width)
}
