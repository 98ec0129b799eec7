//! Masked-LM fine-tuning on news text and the drift it causes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::write_atomic;
use crate::emotions::{profile_model, EmotionLexicon, EmotionProfiles};
use crate::error::{Error, Result};
use crate::evaluate::{recall_at_k, recall_diff, MatchMode, PredictionSource, RecallDiff};
use crate::harvest::StereotypeRecord;
use crate::probe::{MaskedLm, PredictionSet};
use crate::registry::{SocialGroup, TemplateSet};
use crate::rsa::{delta_rho, DeltaRho, Rsm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Share of tokens masked per sequence.
    pub mask_prob: f64,
    /// Sequences are truncated to this many tokens.
    pub max_len: usize,
    /// Linear warmup steps before the linear decay.
    pub warmup_steps: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 1,
            learning_rate: 5e-5,
            batch_size: 8,
            mask_prob: 0.15,
            max_len: 512,
            warmup_steps: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.max_len < 2 {
            return Err(Error::Validation("epochs, batch_size and max_len must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.mask_prob > 0.0 && self.mask_prob < 1.0) {
            return Err(Error::Validation(format!("mask probability {} outside (0, 1)", self.mask_prob)));
        }
        Ok(())
    }

    /// Learning rate at optimizer step `step` (0-based) of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let decay = total.saturating_sub(self.warmup_steps).max(1) as f64;
        let done = (step - self.warmup_steps) as f64;
        self.learning_rate * (1.0 - done / decay).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// One JSON object per line with a text field.
    #[default]
    Jsonl,
    /// All-The-News style CSV with a `content` column.
    Csv,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            _ => Err(Error::Validation(format!("unknown corpus format {s:?}"))),
        }
    }
}

impl CorpusFormat {
    /// Guess from the file extension.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// Share of a corpus to train on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Fraction(f64);

impl Fraction {
    pub const FULL: Fraction = Fraction(1.0);

    pub fn new(f: f64) -> Result<Self> {
        if f > 0.0 && f <= 1.0 {
            Ok(Fraction(f))
        } else {
            Err(Error::Validation(format!("fraction {f} outside (0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Documents selected out of `n`: round(f * n), at least one.
    pub fn of(self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        ((self.0 * n as f64).round() as usize).clamp(1, n)
    }
}

impl TryFrom<f64> for Fraction {
    type Error = Error;

    fn try_from(f: f64) -> Result<Self> {
        Fraction::new(f)
    }
}

impl From<Fraction> for f64 {
    fn from(f: Fraction) -> f64 {
        f.0
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    /// News source name, e.g. "reuters".
    pub source: String,
    pub path: PathBuf,
    pub format: CorpusFormat,
    /// JSON key or CSV column holding the article text.
    pub text_field: String,
    pub fraction: Fraction,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn new(source: &str, path: &Path, fraction: Fraction, seed: u64) -> Self {
        let format = CorpusFormat::for_path(path);
        CorpusSpec {
            source: source.to_string(),
            path: path.to_path_buf(),
            format,
            text_field: match format {
                CorpusFormat::Jsonl => "text".into(),
                CorpusFormat::Csv => "content".into(),
            },
            fraction,
            seed,
        }
    }
}

/// Read every non-empty document of a corpus file.
pub fn load_corpus(spec: &CorpusSpec) -> Result<Vec<String>> {
    let path = &spec.path;
    let name = path.display().to_string();
    let mut docs = Vec::new();
    match spec.format {
        CorpusFormat::Jsonl => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let v: serde_json::Value =
                    serde_json::from_str(line).map_err(|e| Error::parse(&name, n + 1, e.to_string()))?;
                let doc = v
                    .get(&spec.text_field)
                    .and_then(|t| t.as_str())
                    .ok_or_else(|| Error::parse(&name, n + 1, format!("missing string field {:?}", spec.text_field)))?;
                if !doc.trim().is_empty() {
                    docs.push(doc.to_string());
                }
            }
        }
        CorpusFormat::Csv => {
            let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(&name, 0, e.to_string()))?;
            let headers = reader.headers().map_err(|e| Error::parse(&name, 1, e.to_string()))?.clone();
            let col = headers
                .iter()
                .position(|h| h == spec.text_field)
                .ok_or_else(|| Error::parse(&name, 1, format!("no column {:?}", spec.text_field)))?;
            for (n, rec) in reader.records().enumerate() {
                let rec = rec.map_err(|e| Error::parse(&name, n + 2, e.to_string()))?;
                if let Some(doc) = rec.get(col).filter(|d| !d.trim().is_empty()) {
                    docs.push(doc.to_string());
                }
            }
        }
    }
    Ok(docs)
}

/// Seeded subsample of `round(f * n)` documents, kept in corpus order.
pub fn subsample<T: Clone>(docs: &[T], fraction: Fraction, seed: u64) -> Vec<T> {
    let mut idx: Vec<usize> = (0..docs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(fraction.of(docs.len()));
    idx.sort_unstable();
    idx.into_iter().map(|i| docs[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Spec string that reopens the trained model.
    pub model_spec: String,
    pub model_id: String,
    pub steps: usize,
    /// Mean masked-token loss per optimizer step.
    pub losses: Vec<f64>,
}

/// Backends that can be trained with the masked-LM objective.
pub trait TrainableMlm: MaskedLm {
    /// Train a copy of the model on `docs`, writing it under `out_dir`.
    /// The receiver is left untouched.
    fn train_mlm(&self, docs: &[String], cfg: &TrainingConfig, seed: u64, out_dir: &Path, model_id: &str) -> Result<TrainOutcome>;

    /// exp of the mean negative log-likelihood of each token with only that
    /// token masked.
    fn pseudo_perplexity(&self, docs: &[String], max_len: usize) -> Result<f64>;
}

/// Metadata stored next to fine-tuned weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRun {
    pub base_model: String,
    pub model_id: String,
    pub model_spec: String,
    pub source: String,
    pub corpus: PathBuf,
    pub fraction: Fraction,
    pub seed: u64,
    pub articles_total: usize,
    pub articles_used: usize,
    pub training: TrainingConfig,
    pub steps: usize,
    pub final_loss: Option<f64>,
}

pub const RUN_FILE: &str = "run.json";

pub fn finetune_mlm(backend: &dyn TrainableMlm, corpus: &CorpusSpec, cfg: &TrainingConfig, out_dir: &Path) -> Result<FinetuneRun> {
    cfg.validate()?;
    let all = load_corpus(corpus)?;
    if all.is_empty() {
        return Err(Error::Validation(format!("corpus {} has no documents", corpus.path.display())));
    }
    let docs = subsample(&all, corpus.fraction, corpus.seed);
    let model_id = format!("{}+{}-{}-s{}", backend.model_id(), corpus.source, corpus.fraction, corpus.seed);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    log::info!("fine-tuning {} on {} of {} {} articles", backend.model_id(), docs.len(), all.len(), corpus.source);
    let outcome = backend.train_mlm(&docs, cfg, corpus.seed, out_dir, &model_id)?;
    let run = FinetuneRun {
        base_model: backend.model_id().to_string(),
        model_id: outcome.model_id,
        model_spec: outcome.model_spec,
        source: corpus.source.clone(),
        corpus: corpus.path.clone(),
        fraction: corpus.fraction,
        seed: corpus.seed,
        articles_total: all.len(),
        articles_used: docs.len(),
        training: cfg.clone(),
        steps: outcome.steps,
        final_loss: outcome.losses.last().copied(),
    };
    write_atomic(&out_dir.join(RUN_FILE), crate::artifact::to_pretty_json(&run)?.as_bytes())?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDiff {
    pub group: String,
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub persisted: BTreeSet<String>,
}

/// Compare the union of each template's top `n` attributes before and after.
pub fn attribute_diff(before: &PredictionSet, after: &PredictionSet, n: usize) -> Result<AttributeDiff> {
    if before.group.key() != after.group.key() {
        return Err(Error::Contract(format!(
            "diffing different groups {:?} and {:?}",
            before.group.name, after.group.name
        )));
    }
    let ids = |s: &PredictionSet| s.per_template.iter().map(|t| t.prompt.clone()).collect::<BTreeSet<_>>();
    if ids(before) != ids(after) {
        return Err(Error::Contract(format!("template sets differ for {:?}", before.group.name)));
    }
    let lower = |s: BTreeSet<String>| s.into_iter().map(|a| a.to_lowercase()).collect::<BTreeSet<_>>();
    let b = lower(before.top_union(n));
    let a = lower(after.top_union(n));
    Ok(AttributeDiff {
        group: before.group.name.clone(),
        added: a.difference(&b).cloned().collect(),
        removed: b.difference(&a).cloned().collect(),
        persisted: a.intersection(&b).cloned().collect(),
    })
}

/// Pair up sets by group and diff each pair.
pub fn attribute_diffs(before: &[PredictionSet], after: &[PredictionSet], n: usize) -> Result<Vec<AttributeDiff>> {
    let after_by: BTreeMap<String, &PredictionSet> = after.iter().map(|s| (s.group.key(), s)).collect();
    if before.len() != after.len() {
        return Err(Error::Contract(format!("{} groups before, {} after", before.len(), after.len())));
    }
    before
        .iter()
        .map(|b| {
            let a = after_by
                .get(&b.group.key())
                .ok_or_else(|| Error::Contract(format!("group {:?} missing after fine-tuning", b.group.name)))?;
            attribute_diff(b, a, n)
        })
        .collect()
}

/// One model's side of a comparison.
pub struct ModelSide<'a> {
    pub source: &'a dyn PredictionSource,
    pub sets: Vec<PredictionSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftOptions {
    pub top_n: usize,
    pub k_grid: Vec<usize>,
    pub include_diagonal: bool,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        ShiftOptions {
            top_n: 15,
            k_grid: vec![5, 10, 25, 50, 100, 200],
            include_diagonal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub model_before: String,
    pub model_after: String,
    pub source: String,
    pub delta_rho: Option<DeltaRho>,
    pub emotions_before: Option<EmotionProfiles>,
    pub emotions_after: Option<EmotionProfiles>,
    pub recall: Option<RecallDiff>,
    pub diffs: Vec<AttributeDiff>,
    pub incomplete: bool,
    /// Sections left out and why.
    pub missing: Vec<String>,
}

/// Δρ, recall deltas and attribute diffs between a model and its
/// fine-tuned copy. A missing dataset or lexicon leaves the matching
/// section out and marks the report incomplete.
#[allow(clippy::too_many_arguments)]
pub fn shift_report(
    before: &ModelSide,
    after: &ModelSide,
    source: &str,
    dataset: Option<&[StereotypeRecord]>,
    templates: &TemplateSet,
    groups: &[SocialGroup],
    lexicon: Option<&EmotionLexicon>,
    opts: &ShiftOptions,
) -> Result<ShiftReport> {
    let mut missing = Vec::new();
    let diffs = attribute_diffs(&before.sets, &after.sets, opts.top_n)?;

    let recall = match dataset {
        Some(data) => {
            let rb = recall_at_k(data, before.source, templates, &opts.k_grid, MatchMode::Exact)?;
            let ra = recall_at_k(data, after.source, templates, &opts.k_grid, MatchMode::Exact)?;
            Some(recall_diff(&rb, &ra)?)
        }
        None => {
            missing.push("recall: no dataset".to_string());
            None
        }
    };

    let (delta, eb, ea) = match lexicon {
        Some(lex) => {
            let pb = profile_model(&before.sets, lex)?;
            let pa = profile_model(&after.sets, lex)?;
            let rb = Rsm::from_profiles(&pb, groups)?;
            let ra = Rsm::from_profiles(&pa, groups)?;
            let shared: Vec<String> = rb.groups.iter().filter(|g| ra.groups.contains(g)).cloned().collect();
            if shared.len() != rb.len() || shared.len() != ra.len() {
                missing.push("emotions: some groups lost coverage on one side only".to_string());
            }
            let d = delta_rho(&rb.submatrix(&shared)?, &ra.submatrix(&shared)?, groups, opts.include_diagonal)?;
            (Some(d), Some(pb), Some(pa))
        }
        None => {
            missing.push("emotions: no lexicon".to_string());
            (None, None, None)
        }
    };

    Ok(ShiftReport {
        model_before: before.source.model_id().to_string(),
        model_after: after.source.model_id().to_string(),
        source: source.to_string(),
        delta_rho: delta,
        emotions_before: eb,
        emotions_after: ea,
        recall,
        diffs,
        incomplete: !missing.is_empty(),
        missing,
    })
}
