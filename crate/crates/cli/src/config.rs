use std::path::{Path, PathBuf};

use hmatpc::analysis::{ANALYSIS_CAP, DEFAULT_EPS};
use hmatpc::pcg::SolveConfig;
use hmatpc::training::TrainConfig;
use hmatpc::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DATA_DIR_ENV: &str = "HMATPC_DATA_DIR";

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub seed: u64,
    pub scales: Vec<usize>,
    pub train_frames: usize,
    pub test_frames: usize,
    pub leaf: usize,
    pub coarse: usize,
    pub methods: Vec<String>,
    pub eps: Vec<f64>,
    pub dense_cap: usize,
    pub jobs: usize,
    pub solve: SolveConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data")),
            seed: 0,
            scales: vec![1024],
            train_frames: 100,
            test_frames: 20,
            leaf: 128,
            coarse: 32,
            methods: ["none", "jacobi", "ic0"].map(String::from).to_vec(),
            eps: DEFAULT_EPS.to_vec(),
            dense_cap: ANALYSIS_CAP,
            jobs: 1,
            solve: SolveConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Built-in defaults overlaid with an optional JSON file.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        for m in &self.methods {
            if !crate::commands::METHODS.contains(&m.as_str()) {
                return Err(Error::Config(format!(
                    "unknown method {m:?}; expected one of {}",
                    crate::commands::METHODS.join(", ")
                )));
            }
        }
        self.solve.validate()?;
        self.train.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
