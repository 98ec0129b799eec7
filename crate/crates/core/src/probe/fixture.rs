//! Lookup-table backend for tests and golden files.
//!
//! Each entry pins the probabilities of some tokens at one mask slot of one
//! sentence. Mass left over is spread evenly over the tokens the entry does
//! not mention.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Casing, MaskedLm, TokenFilter, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// Unknown sentences are a backend error.
    #[default]
    Error,
    /// Unknown sentences get a uniform distribution.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub text: String,
    pub slot: usize,
    pub probs: BTreeMap<String, f64>,
}

/// On-disk form of a fixture backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub model_id: String,
    pub mask_token: String,
    pub casing: Casing,
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub special_tokens: BTreeSet<String>,
    #[serde(default)]
    pub fallback: Fallback,
    pub entries: Vec<FixtureEntry>,
}

pub struct FixtureBackend {
    model_id: String,
    mask_token: String,
    casing: Casing,
    vocab: Vocabulary,
    filter: TokenFilter,
    fallback: Fallback,
    table: HashMap<(String, usize), Vec<f64>>,
}

impl FixtureBackend {
    pub fn from_spec(spec: FixtureSpec) -> Result<Self> {
        let vocab = Vocabulary::new(spec.vocabulary)?;
        if !vocab.contains(&spec.mask_token) {
            return Err(Error::Validation(format!("mask token {:?} is not in the vocabulary", spec.mask_token)));
        }
        let mut special = spec.special_tokens;
        special.insert(spec.mask_token.clone());
        let mut backend = FixtureBackend {
            model_id: spec.model_id,
            mask_token: spec.mask_token,
            casing: spec.casing,
            vocab,
            filter: TokenFilter {
                special,
                continuation_prefix: Some("##".into()),
                word_prefix: None,
            },
            fallback: spec.fallback,
            table: HashMap::new(),
        };
        for entry in spec.entries {
            let dist = backend.expand(&entry)?;
            let key = (backend.normalize(&entry.text), entry.slot);
            if backend.table.insert(key, dist).is_some() {
                return Err(Error::Validation(format!("duplicate fixture entry for {:?}", entry.text)));
            }
        }
        Ok(backend)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_spec(serde_json::from_str(&text)?)
    }

    fn normalize(&self, text: &str) -> String {
        let t = text.split_whitespace().collect::<Vec<_>>().join(" ");
        match self.casing {
            Casing::Uncased => t.to_lowercase(),
            Casing::Cased => t,
        }
    }

    fn expand(&self, entry: &FixtureEntry) -> Result<Vec<f64>> {
        let mut dist = vec![f64::NAN; self.vocab.len()];
        let mut listed = 0.0;
        for (tok, &p) in &entry.probs {
            let i = self
                .vocab
                .id(tok)
                .ok_or_else(|| Error::Validation(format!("fixture token {tok:?} not in vocabulary")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("probability {p} for {tok:?} out of range")));
            }
            dist[i] = p;
            listed += p;
        }
        let rest = dist.iter().filter(|p| p.is_nan()).count();
        let residual = 1.0 - listed;
        if residual < -1e-9 || (rest == 0 && residual.abs() > 1e-9) {
            return Err(Error::Validation(format!(
                "fixture entry {:?} slot {} has listed mass {listed}",
                entry.text, entry.slot
            )));
        }
        let share = if rest == 0 { 0.0 } else { residual.max(0.0) / rest as f64 };
        dist.iter_mut().filter(|p| p.is_nan()).for_each(|p| *p = share);
        Ok(dist)
    }
}

impl MaskedLm for FixtureBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn casing(&self) -> Casing {
        self.casing
    }

    fn token_filter(&self) -> &TokenFilter {
        &self.filter
    }

    fn mask_distribution(&self, text: &str, slot: usize) -> Result<Vec<f64>> {
        match self.table.get(&(self.normalize(text), slot)) {
            Some(d) => Ok(d.clone()),
            None => match self.fallback {
                Fallback::Uniform => Ok(vec![1.0 / self.vocab.len() as f64; self.vocab.len()]),
                Fallback::Error => Err(Error::Backend(format!("fixture has no entry for {text:?} slot {slot}"))),
            },
        }
    }
}
