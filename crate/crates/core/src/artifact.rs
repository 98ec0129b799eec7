//! Atomic file writes and provenance-stamped JSON artifacts.

use std::io::Write;
use std::path::Path;

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::probe::PredictionSet;
use crate::rsa::{ModelGrid, Rsm};

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Contract(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Run configuration embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Self {
        Provenance {
            config_hash: config.hash(),
            config: config.clone(),
        }
    }
}

/// A JSON artifact: a kind tag, provenance, and the payload fields inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub kind: String,
    pub provenance: Provenance,
    #[serde(flatten)]
    pub data: T,
}

impl<T: Serialize> Artifact<T> {
    pub fn new(kind: &str, config: &RunConfig, data: T) -> Self {
        Artifact {
            kind: kind.to_string(),
            provenance: Provenance::new(config),
            data,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

impl<T: DeserializeOwned> Artifact<T> {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Serialize any value as pretty JSON with a trailing newline.
pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Payload of `predictions` artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub model_id: String,
    pub k: usize,
    pub sets: Vec<PredictionSet>,
    /// Group -> error message.
    pub failed: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRsm {
    pub model_id: String,
    pub rsm: Rsm,
}

/// Payload of `rsa-grid` artifacts: the model grid plus each model's RSM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaGrid {
    #[serde(flatten)]
    pub grid: ModelGrid,
    pub rsms: Vec<ModelRsm>,
}
