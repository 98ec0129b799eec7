//! Content-addressed prediction cache.
//!
//! Each entry is keyed by (model id, template id, group, k, extension) and
//! stored as `<sha>.jsonl` (one [`RankedPrediction`] per line) plus
//! `<sha>.manifest.json` holding the key and the SHA-256 of the JSON-lines
//! file. The manifest is written last, so a reader never sees a manifest
//! for a half-written entry.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PredictionSet, Prompt, RankedPrediction, TemplatePredictions};
use crate::artifact::write_atomic;
use crate::error::{Error, Result};
use crate::registry::{Category, Form, SocialGroup};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub model_id: String,
    pub group: String,
    pub category: Category,
    pub template_id: u8,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub extension: String,
    pub k: usize,
    pub count: usize,
    pub checksum: String,
}

#[derive(Debug, Clone)]
pub struct PredictionCache {
    dir: PathBuf,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl PredictionCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(PredictionCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_id(model_id: &str, group: &SocialGroup, prompt: &Prompt, k: usize) -> String {
        let key = format!(
            "{model_id}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{k}\u{1f}{}",
            prompt.template_id,
            group.form,
            group.key(),
            prompt.extension
        );
        sha_hex(key.as_bytes())
    }

    fn paths(&self, id: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{id}.jsonl")),
            self.dir.join(format!("{id}.manifest.json")),
        )
    }

    pub fn store_prompt(&self, model_id: &str, group: &SocialGroup, preds: &TemplatePredictions, k: usize) -> Result<()> {
        let id = Self::entry_id(model_id, group, &preds.prompt, k);
        let (data_path, manifest_path) = self.paths(&id);
        let mut body = String::new();
        for p in &preds.predictions {
            body.push_str(&serde_json::to_string(p)?);
            body.push('\n');
        }
        let manifest = CacheManifest {
            model_id: model_id.to_string(),
            group: group.name.clone(),
            category: group.category,
            template_id: preds.prompt.template_id,
            extension: preds.prompt.extension.clone(),
            k,
            count: preds.predictions.len(),
            checksum: sha_hex(body.as_bytes()),
        };
        write_atomic(&data_path, body.as_bytes())?;
        write_atomic(&manifest_path, crate::artifact::to_pretty_json(&manifest)?.as_bytes())
    }

    /// `Ok(None)` on a miss. A checksum mismatch removes the entry and
    /// reports [`Error::Checksum`].
    pub fn load_prompt(
        &self,
        model_id: &str,
        group: &SocialGroup,
        prompt: &Prompt,
        k: usize,
    ) -> Result<Option<TemplatePredictions>> {
        let id = Self::entry_id(model_id, group, prompt, k);
        let (data_path, manifest_path) = self.paths(&id);
        let Ok(manifest_text) = std::fs::read_to_string(&manifest_path) else {
            return Ok(None);
        };
        let invalidate = || {
            let _ = std::fs::remove_file(&manifest_path);
            let _ = std::fs::remove_file(&data_path);
            Error::Checksum { key: id.clone() }
        };
        let manifest: CacheManifest = serde_json::from_str(&manifest_text).map_err(|_| invalidate())?;
        if manifest.model_id != model_id || manifest.template_id != prompt.template_id || manifest.k != k {
            return Ok(None);
        }
        let body = std::fs::read(&data_path).map_err(|_| invalidate())?;
        if sha_hex(&body) != manifest.checksum {
            return Err(invalidate());
        }
        let text = String::from_utf8(body).map_err(|_| invalidate())?;
        let predictions = text
            .lines()
            .map(serde_json::from_str::<RankedPrediction>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| invalidate())?;
        if predictions.len() != manifest.count {
            return Err(invalidate());
        }
        Ok(Some(TemplatePredictions {
            prompt: prompt.clone(),
            predictions,
        }))
    }

    pub fn cache_predictions(&self, set: &PredictionSet) -> Result<()> {
        for t in &set.per_template {
            self.store_prompt(&set.model_id, &set.group, t, set.k)?;
        }
        Ok(())
    }

    /// All five base templates of the group, or `None` if any is missing.
    pub fn load_predictions(&self, model_id: &str, group: &SocialGroup, k: usize) -> Result<Option<PredictionSet>> {
        let mut per_template = Vec::with_capacity(5);
        for id in 1..=5u8 {
            match self.load_prompt(model_id, group, &Prompt::base(id), k)? {
                Some(t) => per_template.push(t),
                None => return Ok(None),
            }
        }
        Ok(Some(PredictionSet::new(model_id, group.clone(), k, per_template)))
    }

    /// Every manifest in the cache, sorted by (model, group, template).
    pub fn manifests(&self) -> Result<Vec<CacheManifest>> {
        let mut out = Vec::new();
        let entries = std::fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let name = entry.file_name();
            if !name.to_string_lossy().ends_with(".manifest.json") {
                continue;
            }
            let text = std::fs::read_to_string(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            match serde_json::from_str::<CacheManifest>(&text) {
                Ok(m) => out.push(m),
                Err(e) => log::warn!("skipping unreadable manifest {}: {e}", entry.path().display()),
            }
        }
        out.sort_by(|a, b| {
            (&a.model_id, a.group.to_lowercase(), a.template_id, &a.extension, a.k).cmp(&(
                &b.model_id,
                b.group.to_lowercase(),
                b.template_id,
                &b.extension,
                b.k,
            ))
        });
        Ok(out)
    }

    /// Complete prediction sets for one model, in group order.
    pub fn sets_for_model(&self, model_id: &str) -> Result<Vec<PredictionSet>> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for m in self.manifests()? {
            if m.model_id != model_id || !m.extension.is_empty() {
                continue;
            }
            if !seen.insert((m.group.to_lowercase(), m.k)) {
                continue;
            }
            let group = SocialGroup {
                name: m.group.clone(),
                category: m.category,
                form: if m.category == Category::Country { Form::Country } else { Form::People },
            };
            if let Some(set) = self.load_predictions(model_id, &group, m.k)? {
                out.push(set);
            }
        }
        Ok(out)
    }

    pub fn model_ids(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = self.manifests()?.into_iter().map(|m| m.model_id).collect();
        ids.sort();
        ids.dedup();
        Ok(ids)
    }
}
