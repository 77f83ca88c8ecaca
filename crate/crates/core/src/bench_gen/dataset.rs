use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io, Frame, FrameSeeds};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Stream key for frame `index` of a split at scale `n`.
///
/// Bits 44.. hold `N`, bit 40 the split, the low 40 bits the index, so keys
/// never collide across scales or splits.
pub fn frame_key(n: usize, split: Split, index: u64) -> u64 {
    let s = match split {
        Split::Train => 0,
        Split::Test => 1,
    };
    ((n as u64) << 44) | (s << 40) | (index & ((1 << 40) - 1))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub scales: Vec<usize>,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
    /// Every scale must be a multiple of this leaf size.
    pub leaf_size: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            scales: vec![1024],
            train: 100,
            test: 20,
            seed: 0,
            leaf_size: 128,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.leaf_size == 0 {
            return Err(Error::config("leaf size must be positive"));
        }
        for &n in &self.scales {
            if n < 256 || n % self.leaf_size != 0 {
                return Err(Error::config(format!(
                    "scale {n} must be >= 256 and divisible by the leaf size {}",
                    self.leaf_size
                )));
            }
        }
        Ok(())
    }
}

pub fn frame_path(root: &Path, n: usize, split: Split, index: usize) -> PathBuf {
    root.join(format!("n{n}"))
        .join(split.dir_name())
        .join(format!("frame_{index:04}.mppf"))
}

/// Writes `out/n{N}/{train,test}/frame_XXXX.mppf` for every scale.
pub fn generate_dataset(out: &Path, spec: &DatasetSpec, exec: Exec) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &n in &spec.scales {
        for (split, count) in [(Split::Train, spec.train), (Split::Test, spec.test)] {
            for i in 0..count {
                jobs.push((n, split, i));
            }
        }
    }
    let results = par::map_indices(exec, jobs.len(), |j| {
        let (n, split, i) = jobs[j];
        let seeds = FrameSeeds {
            master: spec.seed,
            frame: frame_key(n, split, i as u64),
        };
        let path = frame_path(out, n, split, i);
        Frame::generate(n, seeds).and_then(|f| io::write_frame(&path, &f))?;
        Ok(path)
    });
    results.into_iter().collect()
}

/// SHA-256 over the concatenated bytes of `paths`, in the given order.
pub fn digest_files(paths: &[PathBuf]) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}
