//! Factor checkpoints: `"HFTC0001" | header_len: u64 LE | JSON header | f32 LE payload`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tensor::FactorTensor;
use crate::error::{Error, Result};
use crate::hpartition::HPartition;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HFTC0001";
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckpointHeader {
    pub n: usize,
    pub leaf: usize,
    pub coarse: usize,
    pub layout_version: u32,
    pub width: usize,
    /// Free-form training metadata (loss, steps, seed, ...).
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn write_checkpoint(path: &Path, m: &FactorTensor<f32>, meta: serde_json::Value) -> Result<()> {
    let header = CheckpointHeader {
        n: m.n(),
        leaf: m.leaf(),
        coarse: m.coarse(),
        layout_version: LAYOUT_VERSION,
        width: m.len(),
        meta,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * m.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(FactorTensor<f32>, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |r: &str| Error::format(path, r);
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let hend = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[16..hend]).map_err(|e| bad(&format!("header: {e}")))?;
    if header.layout_version != LAYOUT_VERSION {
        return Err(bad("unsupported layout version"));
    }
    let payload = &bytes[hend..];
    if payload.len() != 4 * header.width {
        return Err(bad("payload length disagrees with header width"));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let part = Arc::new(HPartition::build(header.n, header.leaf)?);
    let m = FactorTensor::from_packed(part, header.coarse, data)?;
    Ok((m, header))
}
