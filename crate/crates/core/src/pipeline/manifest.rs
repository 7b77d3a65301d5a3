//! Run manifest: configuration snapshot plus per-stage artifacts and checksums.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{PipelineConfig, Stage};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A file written by a stage, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub artifacts: Vec<Artifact>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    /// Completed stages in execution order.
    pub stages: Vec<StageRecord>,
    pub failure: Option<StageFailure>,
    /// Directory the manifest lives in; not serialized.
    #[serde(skip)]
    pub run_dir: PathBuf,
}

impl RunManifest {
    pub fn new(config: PipelineConfig) -> Self {
        Self { version: env!("CARGO_PKG_VERSION").to_string(), config, stages: Vec::new(), failure: None, run_dir: PathBuf::new() }
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// Artifact by relative path, searched across all stages.
    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.stages.iter().flat_map(|s| &s.artifacts).find(|a| a.path == path)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Load and verify every recorded checksum.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut m: Self = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        m.verify(dir)?;
        m.run_dir = dir.to_path_buf();
        Ok(m)
    }

    pub fn verify(&self, dir: &Path) -> Result<()> {
        for a in self.stages.iter().flat_map(|s| &s.artifacts) {
            let p = dir.join(&a.path);
            if !p.exists() {
                return Err(Error::Checksum(format!("{} (missing)", a.path)));
            }
            if sha256_file(&p)? != a.sha256 {
                return Err(Error::Checksum(a.path.clone()));
            }
        }
        Ok(())
    }
}

/// Lower-case hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}
