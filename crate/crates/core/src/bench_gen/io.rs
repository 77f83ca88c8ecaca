//! The `MPPF` frame file format, version 1.
//!
//! ```text
//! "MPPF0001" | header_len: u64 LE | JSON header | sha256(JSON header) | sections
//! ```
//!
//! Sections are little-endian arrays in the order `rho` (f64), `row_offsets`
//! (u64), `col_indices` (u32), `values` (f64), `b` (f64). Each section's
//! offset is relative to the first byte after the header checksum.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BarrierSpec, Frame, FrameSeeds, Grid};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

pub const MAGIC: &[u8; 8] = b"MPPF0001";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Section {
    pub name: String,
    pub dtype: String,
    pub offset: u64,
    /// Element count.
    pub length: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Header {
    pub n: usize,
    pub width: usize,
    pub height: usize,
    pub nnz: usize,
    pub seeds: FrameSeeds,
    pub rho_heavy: f64,
    pub barriers: Vec<BarrierSpec>,
    pub sections: Vec<Section>,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

/// Serializes a frame to bytes.
pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let a = &frame.a;
    let payloads: Vec<(&str, &str, usize, Vec<u8>)> = vec![
        ("rho", "f64", frame.rho.len(), f64_bytes(&frame.rho)),
        (
            "row_offsets",
            "u64",
            a.row_offsets().len(),
            a.row_offsets()
                .iter()
                .flat_map(|&x| (x as u64).to_le_bytes())
                .collect(),
        ),
        (
            "col_indices",
            "u32",
            a.col_indices().len(),
            a.col_indices().iter().flat_map(|x| x.to_le_bytes()).collect(),
        ),
        ("values", "f64", a.nnz(), f64_bytes(a.values())),
        ("b", "f64", frame.b.len(), f64_bytes(&frame.b)),
    ];
    let mut offset = 0u64;
    let mut sections = Vec::new();
    for (name, dtype, len, bytes) in &payloads {
        sections.push(Section {
            name: name.to_string(),
            dtype: dtype.to_string(),
            offset,
            length: *len as u64,
            sha256: sha_hex(bytes),
        });
        offset += bytes.len() as u64;
    }
    let header = Header {
        n: frame.n(),
        width: frame.grid.width,
        height: frame.grid.height,
        nnz: a.nnz(),
        seeds: frame.seeds,
        rho_heavy: frame.rho_heavy,
        barriers: frame.barriers.clone(),
        sections,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(48 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&Sha256::digest(&json));
    for (_, _, _, bytes) in payloads {
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode_frame(frame)).map_err(|e| Error::io(path, e))
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&bytes).map_err(|reason| Error::format(path, reason))
}

fn section<'a>(
    header: &Header,
    data: &'a [u8],
    name: &str,
    dtype: &str,
    width: usize,
) -> std::result::Result<&'a [u8], String> {
    let s = header
        .sections
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| format!("missing section {name}"))?;
    if s.dtype != dtype {
        return Err(format!("section {name} has dtype {}, expected {dtype}", s.dtype));
    }
    let start = s.offset as usize;
    let end = start
        .checked_add(s.length as usize * width)
        .filter(|&e| e <= data.len())
        .ok_or_else(|| format!("section {name} runs past end of file"))?;
    let bytes = &data[start..end];
    if sha_hex(bytes) != s.sha256 {
        return Err(format!("checksum mismatch in section {name}"));
    }
    Ok(bytes)
}

fn read_f64(b: &[u8]) -> Vec<f64> {
    b.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

/// Parses and validates a frame image.
pub fn decode_frame(bytes: &[u8]) -> std::result::Result<Frame, String> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err("bad magic".into());
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let hend = 16usize
        .checked_add(hlen)
        .filter(|&e| e + 32 <= bytes.len())
        .ok_or("truncated header")?;
    let json = &bytes[16..hend];
    if Sha256::digest(json).as_slice() != &bytes[hend..hend + 32] {
        return Err("header checksum mismatch".into());
    }
    let header: Header = serde_json::from_slice(json).map_err(|e| format!("header: {e}"))?;
    let data = &bytes[hend + 32..];

    let rho = read_f64(section(&header, data, "rho", "f64", 8)?);
    let row_offsets: Vec<usize> = section(&header, data, "row_offsets", "u64", 8)?
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    let col_indices: Vec<u32> = section(&header, data, "col_indices", "u32", 4)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let values = read_f64(section(&header, data, "values", "f64", 8)?);
    let b = read_f64(section(&header, data, "b", "f64", 8)?);

    let n = header.n;
    let grid = Grid::new(n).map_err(|e| e.to_string())?;
    if (grid.width, grid.height) != (header.width, header.height) {
        return Err("grid dimensions disagree with N".into());
    }
    if rho.len() != n || b.len() != n || values.len() != header.nnz {
        return Err("section lengths disagree with header".into());
    }
    let a = CsrMatrix::new(n, n, row_offsets, col_indices, values).map_err(|e| e.to_string())?;
    Ok(Frame {
        grid,
        rho,
        a,
        b,
        seeds: header.seeds,
        rho_heavy: header.rho_heavy,
        barriers: header.barriers,
    })
}

/// Hex SHA-256 of a frame's encoded bytes.
pub fn frame_digest(frame: &Frame) -> String {
    sha_hex(&encode_frame(frame))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let f = Frame::generate(
            64,
            FrameSeeds {
                master: 3,
                frame: 1,
            },
        )
        .unwrap();
        let bytes = encode_frame(&f);
        let g = decode_frame(&bytes).unwrap();
        assert_eq!(g.a, f.a);
        assert_eq!(g.b, f.b);
        assert_eq!(g.rho, f.rho);

        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() ^= 1;
        assert!(decode_frame(&bad).unwrap_err().contains("checksum"));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode_frame(&bad).is_err());
    }
}
