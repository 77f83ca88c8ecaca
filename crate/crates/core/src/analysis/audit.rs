use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpartition::HPartition;
use crate::linalg::{singular_values, DenseMat};
use crate::par::{self, Exec};

pub const DEFAULT_EPS: [f64; 3] = [1e-3, 1e-6, 1e-9];

/// Smallest `r` with `‖X − X_r‖_F ≤ eps ‖X‖_F`, given descending singular values.
pub fn required_rank(singular: &[f64], eps: f64) -> usize {
    let total: f64 = singular.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let budget = eps * eps * total;
    let mut tail = 0.0;
    let mut r = singular.len();
    // grow the tail from the smallest value while it stays within budget
    for (i, s) in singular.iter().enumerate().rev() {
        let next = tail + s * s;
        if next > budget {
            break;
        }
        tail = next;
        r = i;
    }
    r
}

/// Relative Frobenius error of the best rank-`r` truncation.
pub fn truncation_error(singular: &[f64], r: usize) -> f64 {
    let total: f64 = singular.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = singular.iter().skip(r).map(|s| s * s).sum();
    (tail / total).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileRank {
    pub tile: usize,
    pub span: usize,
    pub eps: f64,
    pub rank: usize,
    /// `rank / (S L)`.
    pub fraction: f64,
}

/// Per-tile required ranks, possibly pooled over several frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankAudit {
    pub leaf: usize,
    pub coarse: usize,
    pub eps: Vec<f64>,
    pub samples: Vec<TileRank>,
}

/// One line of the rank-audit CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    #[serde(rename = "S")]
    pub span: usize,
    pub eps: f64,
    pub provided: f64,
    pub required_mean: f64,
    pub required_std: f64,
}

impl RankAudit {
    pub fn merge(&mut self, other: RankAudit) -> Result<()> {
        if (self.leaf, self.coarse) != (other.leaf, other.coarse) || self.eps != other.eps {
            return Err(Error::contract("cannot pool audits with different L, L_s or eps lists"));
        }
        self.samples.extend(other.samples);
        Ok(())
    }

    /// Provided fraction `L_s / (S L)`.
    pub fn provided(&self, span: usize) -> f64 {
        self.coarse as f64 / (span * self.leaf) as f64
    }

    /// Mean and population standard deviation per `(S, eps)`, sorted by `S` then `eps` list order.
    pub fn rows(&self) -> Vec<AuditRow> {
        let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for s in &self.samples {
            let e = self.eps.iter().position(|&e| e == s.eps).unwrap_or(usize::MAX);
            groups.entry((s.span, e)).or_default().push(s.fraction);
        }
        groups
            .into_iter()
            .map(|((span, e), v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                AuditRow {
                    span,
                    eps: self.eps[e],
                    provided: self.provided(span),
                    required_mean: mean,
                    required_std: var.sqrt(),
                }
            })
            .collect()
    }
}

/// Audits every off-diagonal tile of `x` (typically `A⁺`) against the partition.
pub fn rank_audit(x: &DenseMat<f64>, partition: &HPartition, coarse: usize, eps: &[f64], exec: Exec) -> Result<RankAudit> {
    let n = partition.n;
    if x.shape() != (n, n) {
        return Err(Error::contract(format!("audited matrix is {:?}, expected {n}x{n}", x.shape())));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::config("audit tolerances must lie in (0, 1)"));
    }
    let l = partition.leaf;
    let per_tile = par::map_indices(exec, partition.num_tiles(), |m| {
        let t = &partition.tiles[m];
        let (r0, c0, side) = (t.rows.start * l, t.cols.start * l, t.span * l);
        let block = DenseMat::from_fn(side, side, |i, j| x[(r0 + i, c0 + j)]);
        singular_values(&block).map(|sv| (m, sv))
    });
    let mut samples = Vec::new();
    for res in per_tile {
        let (m, sv) = res?;
        let t = &partition.tiles[m];
        for &e in eps {
            let rank = required_rank(&sv, e);
            samples.push(TileRank {
                tile: m,
                span: t.span,
                eps: e,
                rank,
                fraction: rank as f64 / (t.span * l) as f64,
            });
        }
    }
    Ok(RankAudit {
        leaf: l,
        coarse,
        eps: eps.to_vec(),
        samples,
    })
}
