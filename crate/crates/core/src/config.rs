//! Declarative run configuration.
//!
//! A single TOML file. Every key is optional and falls back to the defaults
//! below; only the cache directory may be overridden from the environment
//! (`STEREOPROBE_CACHE_DIR`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::finetune::TrainingConfig;
use crate::harvest::Engine;

pub const CACHE_DIR_ENV: &str = "STEREOPROBE_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Backend specs, e.g. `fixture:path.json`, `desk:model.json`, `bridge:bert-base-uncased`.
    pub models: Vec<String>,
    /// Elicitation depth per template.
    pub k: usize,
    pub k_grid: Vec<usize>,
    /// Attributes per template compared by `diff`.
    pub top_n: usize,
    pub template_file: Option<PathBuf>,
    pub registry_file: Option<PathBuf>,
    pub extra_groups_file: Option<PathBuf>,
    /// Restrict runs to these group names; empty means every registry group.
    pub groups: Vec<String>,
    pub dataset: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub engines: Vec<Engine>,
    pub engine_config: Option<PathBuf>,
    pub curation_dir: Option<PathBuf>,
    /// Keep the RSM diagonal in the similarity vectors.
    pub include_diagonal: bool,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            models: Vec::new(),
            k: 200,
            k_grid: vec![5, 10, 25, 50, 100, 200],
            top_n: 15,
            template_file: None,
            registry_file: None,
            extra_groups_file: None,
            groups: Vec::new(),
            dataset: None,
            lexicon: None,
            cache_dir: None,
            seed: 7,
            engines: Engine::SEARCH.to_vec(),
            engine_config: None,
            curation_dir: None,
            include_diagonal: false,
            training: TrainingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Apply the cache-directory environment override.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV) {
            self.cache_dir = Some(PathBuf::from(dir));
        }
        self
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Check every referenced input file before any backend is touched.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Validation("k must be positive".into()));
        }
        if self.k_grid.contains(&0) {
            return Err(Error::Validation("k grid entries must be positive".into()));
        }
        let inputs = [
            ("template_file", &self.template_file),
            ("registry_file", &self.registry_file),
            ("extra_groups_file", &self.extra_groups_file),
            ("dataset", &self.dataset),
            ("lexicon", &self.lexicon),
            ("engine_config", &self.engine_config),
            ("curation_dir", &self.curation_dir),
        ];
        for (name, path) in inputs {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Validation(format!("{name} {} does not exist", p.display())));
                }
            }
        }
        self.training.validate()
    }
}
