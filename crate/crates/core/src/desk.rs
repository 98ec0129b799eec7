//! A small word-level masked LM that runs and trains on a laptop CPU.
//!
//! The hidden state at a masked position is
//! `h = tanh(sum_o g_o * E[x_(i+o)] + c)` over the `window` tokens on each
//! side (elementwise gates `g_o`, one per offset), and the output is
//! `softmax(O h + b)` over the vocabulary. Trained with Adam on the
//! masked-token cross-entropy, gradients written out by hand.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::write_atomic;
use crate::error::{Error, Result};
use crate::finetune::{TrainOutcome, TrainableMlm, TrainingConfig};
use crate::par;
use crate::probe::{Casing, MaskedLm, TokenFilter, Vocabulary};
use crate::registry::{Registry, TemplateSet};

pub const PAD: &str = "[PAD]";
pub const MASK: &str = "[MASK]";
pub const UNK: &str = "[UNK]";
pub const MODEL_FILE: &str = "model.json";

/// Examples per gradient chunk; fixed so results do not depend on the
/// number of threads.
const CHUNK: usize = 32;

/// Lowercase, split on whitespace, and split punctuation into its own
/// tokens. `[MASK]` is kept as is.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut pieces = chunk.split(MASK).peekable();
        while let Some(piece) = pieces.next() {
            split_piece(piece, &mut out);
            if pieces.peek().is_some() {
                out.push(MASK.to_string());
            }
        }
    }
    out
}

fn split_piece(piece: &str, out: &mut Vec<String>) {
    let mut word = String::new();
    for ch in piece.to_lowercase().chars() {
        if ch.is_alphanumeric() || ch == '-' || ch == '\'' {
            word.push(ch);
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskShape {
    pub dim: usize,
    pub window: usize,
}

impl Default for DeskShape {
    fn default() -> Self {
        DeskShape { dim: 32, window: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Weights {
    emb: Vec<f32>,
    gates: Vec<f32>,
    hidden_bias: Vec<f32>,
    out: Vec<f32>,
    out_bias: Vec<f32>,
}

impl Weights {
    fn zeros_like(&self) -> Self {
        Weights {
            emb: vec![0.0; self.emb.len()],
            gates: vec![0.0; self.gates.len()],
            hidden_bias: vec![0.0; self.hidden_bias.len()],
            out: vec![0.0; self.out.len()],
            out_bias: vec![0.0; self.out_bias.len()],
        }
    }

    fn parts(&self) -> [&Vec<f32>; 5] {
        [&self.emb, &self.gates, &self.hidden_bias, &self.out, &self.out_bias]
    }

    fn parts_mut(&mut self) -> [&mut Vec<f32>; 5] {
        [
            &mut self.emb,
            &mut self.gates,
            &mut self.hidden_bias,
            &mut self.out,
            &mut self.out_bias,
        ]
    }

    fn add(&mut self, other: &Weights) {
        for (a, b) in self.parts_mut().into_iter().zip(other.parts()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DeskFile {
    model_id: String,
    shape: DeskShape,
    tokens: Vec<String>,
    weights: Weights,
}

pub struct DeskModel {
    model_id: String,
    shape: DeskShape,
    vocab: Vocabulary,
    filter: TokenFilter,
    w: Weights,
    pad: usize,
    mask: usize,
    unk: usize,
}

impl Clone for DeskModel {
    fn clone(&self) -> Self {
        DeskModel {
            model_id: self.model_id.clone(),
            shape: self.shape.clone(),
            vocab: Vocabulary::new(self.vocab.tokens().to_vec()).expect("vocabulary was valid"),
            filter: self.filter.clone(),
            w: self.w.clone(),
            pad: self.pad,
            mask: self.mask,
            unk: self.unk,
        }
    }
}

fn special_filter() -> TokenFilter {
    TokenFilter {
        special: [PAD, MASK, UNK].into_iter().map(String::from).collect(),
        continuation_prefix: None,
        word_prefix: None,
    }
}

struct Example {
    seq: usize,
    pos: usize,
    target: usize,
}

impl DeskModel {
    /// Fresh random weights over `words` (special tokens are added).
    pub fn new(model_id: &str, words: &BTreeSet<String>, shape: DeskShape, seed: u64) -> Result<Self> {
        if shape.dim == 0 || shape.window == 0 {
            return Err(Error::Validation("desk model needs positive dim and window".into()));
        }
        let mut tokens: Vec<String> = [PAD, MASK, UNK].into_iter().map(String::from).collect();
        tokens.extend(words.iter().filter(|w| ![PAD, MASK, UNK].contains(&w.as_str())).cloned());
        let v = tokens.len();
        let d = shape.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, lo: f32, hi: f32| (0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<f32>>();
        let w = Weights {
            emb: uniform(v * d, -0.5, 0.5),
            gates: uniform(2 * shape.window * d, 0.2, 0.6),
            hidden_bias: vec![0.0; d],
            out: uniform(v * d, -0.1, 0.1),
            out_bias: vec![0.0; v],
        };
        Self::assemble(model_id.to_string(), shape, tokens, w)
    }

    fn assemble(model_id: String, shape: DeskShape, tokens: Vec<String>, w: Weights) -> Result<Self> {
        let vocab = Vocabulary::new(tokens)?;
        let (v, d) = (vocab.len(), shape.dim);
        if w.emb.len() != v * d
            || w.out.len() != v * d
            || w.out_bias.len() != v
            || w.hidden_bias.len() != d
            || w.gates.len() != 2 * shape.window * d
        {
            return Err(Error::Validation("desk weights do not match the vocabulary and shape".into()));
        }
        let need = |t: &str| vocab.id(t).ok_or_else(|| Error::Validation(format!("desk vocabulary lacks {t}")));
        Ok(DeskModel {
            pad: need(PAD)?,
            mask: need(MASK)?,
            unk: need(UNK)?,
            model_id,
            shape,
            vocab,
            filter: special_filter(),
            w,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: DeskFile = serde_json::from_str(&text)?;
        Self::assemble(f.model_id, f.shape, f.tokens, f.weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = DeskFile {
            model_id: self.model_id.clone(),
            shape: self.shape.clone(),
            tokens: self.vocab.tokens().to_vec(),
            weights: self.w.clone(),
        };
        write_atomic(path, serde_json::to_string(&f)?.as_bytes())
    }

    pub fn with_model_id(mut self, id: &str) -> Self {
        self.model_id = id.to_string();
        self
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.id(t).unwrap_or(self.unk)).collect()
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, isize)> + '_ {
        let w = self.shape.window as isize;
        (-w..=w).filter(|&o| o != 0).enumerate()
    }

    fn context_token(&self, ids: &[usize], pos: usize, off: isize) -> usize {
        let j = pos as isize + off;
        if j < 0 || j >= ids.len() as isize {
            self.pad
        } else {
            ids[j as usize]
        }
    }

    fn hidden(&self, ids: &[usize], pos: usize) -> Vec<f32> {
        let d = self.shape.dim;
        let mut z = self.w.hidden_bias.clone();
        for (oi, off) in self.offsets() {
            let t = self.context_token(ids, pos, off);
            let e = &self.w.emb[t * d..(t + 1) * d];
            let g = &self.w.gates[oi * d..(oi + 1) * d];
            for j in 0..d {
                z[j] += g[j] * e[j];
            }
        }
        z.iter_mut().for_each(|x| *x = x.tanh());
        z
    }

    fn probs(&self, h: &[f32]) -> Vec<f64> {
        let d = self.shape.dim;
        let logits: Vec<f64> = (0..self.vocab.len())
            .map(|v| {
                let row = &self.w.out[v * d..(v + 1) * d];
                let s: f32 = row.iter().zip(h).map(|(a, b)| a * b).sum();
                f64::from(s + self.w.out_bias[v])
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        p
    }

    /// Distribution at position `pos` of an id sequence.
    pub fn distribution_at(&self, ids: &[usize], pos: usize) -> Vec<f64> {
        self.probs(&self.hidden(ids, pos))
    }

    /// Add the cross-entropy gradient of one example to `g`; returns the loss.
    fn accumulate(&self, ids: &[usize], pos: usize, target: usize, g: &mut Weights) -> f64 {
        let d = self.shape.dim;
        let h = self.hidden(ids, pos);
        let p = self.probs(&h);
        let loss = -p[target].max(1e-300).ln();
        let mut dh = vec![0f32; d];
        for (v, &pv) in p.iter().enumerate() {
            let dl = (pv - if v == target { 1.0 } else { 0.0 }) as f32;
            if dl == 0.0 {
                continue;
            }
            g.out_bias[v] += dl;
            let row = &self.w.out[v * d..(v + 1) * d];
            let grow = &mut g.out[v * d..(v + 1) * d];
            for j in 0..d {
                grow[j] += dl * h[j];
                dh[j] += dl * row[j];
            }
        }
        let dz: Vec<f32> = dh.iter().zip(&h).map(|(a, hj)| a * (1.0 - hj * hj)).collect();
        g.hidden_bias.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        for (oi, off) in self.offsets() {
            let t = self.context_token(ids, pos, off);
            for j in 0..d {
                g.gates[oi * d + j] += dz[j] * self.w.emb[t * d + j];
                g.emb[t * d + j] += dz[j] * self.w.gates[oi * d + j];
            }
        }
        loss
    }

    fn batch_gradient(&self, seqs: &[Vec<usize>], examples: &[Example]) -> (Weights, f64) {
        let chunks: Vec<&[Example]> = examples.chunks(CHUNK).collect();
        let parts = par::map(&chunks, |chunk| {
            let mut g = self.w.zeros_like();
            let mut loss = 0.0;
            for ex in chunk.iter() {
                loss += self.accumulate(&seqs[ex.seq], ex.pos, ex.target, &mut g);
            }
            (g, loss)
        });
        let mut total = self.w.zeros_like();
        let mut loss = 0.0;
        for (g, l) in &parts {
            total.add(g);
            loss += l;
        }
        (total, loss)
    }

    /// Masked-LM training in place.
    pub fn train_in_place(&mut self, docs: &[String], cfg: &TrainingConfig, seed: u64) -> Result<Vec<f64>> {
        cfg.validate()?;
        let seqs: Vec<Vec<usize>> = docs
            .iter()
            .map(|d| {
                let mut ids = self.ids(&tokenize(d));
                ids.truncate(cfg.max_len);
                ids
            })
            .filter(|ids| !ids.is_empty())
            .collect();
        if seqs.is_empty() {
            return Err(Error::Validation("no trainable text in corpus".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps_per_epoch = seqs.len().div_ceil(cfg.batch_size);
        let total = steps_per_epoch * cfg.epochs;
        let mut adam = Adam::new(&self.w);
        let mut losses = Vec::with_capacity(total);
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let mut inputs = Vec::with_capacity(batch.len());
                let mut examples = Vec::new();
                for (bi, &si) in batch.iter().enumerate() {
                    let mut ids = seqs[si].clone();
                    let mut picked: Vec<usize> = (0..ids.len()).filter(|_| rng.gen_bool(cfg.mask_prob)).collect();
                    if picked.is_empty() {
                        picked.push(rng.gen_range(0..ids.len()));
                    }
                    for &p in &picked {
                        examples.push(Example {
                            seq: bi,
                            pos: p,
                            target: ids[p],
                        });
                        ids[p] = self.mask;
                    }
                    inputs.push(ids);
                }
                let (mut g, loss) = self.batch_gradient(&inputs, &examples);
                let n = examples.len() as f32;
                for part in g.parts_mut() {
                    part.iter_mut().for_each(|x| *x /= n);
                }
                let lr = cfg.lr_at(losses.len(), total);
                adam.step(&mut self.w, &g, lr as f32);
                losses.push(loss / examples.len() as f64);
            }
        }
        Ok(losses)
    }

    fn seqs(&self, docs: &[String], max_len: usize) -> Vec<Vec<usize>> {
        docs.iter()
            .map(|d| {
                let mut ids = self.ids(&tokenize(d));
                ids.truncate(max_len);
                ids
            })
            .collect()
    }
}

struct Adam {
    m: Weights,
    v: Weights,
    t: i32,
}

impl Adam {
    const B1: f32 = 0.9;
    const B2: f32 = 0.999;
    const EPS: f32 = 1e-8;

    fn new(w: &Weights) -> Self {
        Adam {
            m: w.zeros_like(),
            v: w.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, w: &mut Weights, g: &Weights, lr: f32) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let params = w.parts_mut();
        let ms = self.m.parts_mut();
        let vs = self.v.parts_mut();
        for (((p, gr), m), v) in params.into_iter().zip(g.parts()).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * gr[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * gr[i] * gr[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + Self::EPS);
            }
        }
    }
}

impl MaskedLm for DeskModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn mask_token(&self) -> &str {
        MASK
    }

    fn casing(&self) -> Casing {
        Casing::Uncased
    }

    fn token_filter(&self) -> &TokenFilter {
        &self.filter
    }

    fn mask_distribution(&self, text: &str, slot: usize) -> Result<Vec<f64>> {
        let ids = self.ids(&tokenize(text));
        let pos = ids
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == self.mask)
            .map(|(i, _)| i)
            .nth(slot)
            .ok_or_else(|| Error::Backend(format!("no mask number {slot} in {text:?}")))?;
        Ok(self.distribution_at(&ids, pos))
    }
}

impl TrainableMlm for DeskModel {
    fn train_mlm(&self, docs: &[String], cfg: &TrainingConfig, seed: u64, out_dir: &Path, model_id: &str) -> Result<TrainOutcome> {
        let mut copy = self.clone().with_model_id(model_id);
        let losses = copy.train_in_place(docs, cfg, seed)?;
        let path = out_dir.join(MODEL_FILE);
        copy.save(&path)?;
        Ok(TrainOutcome {
            model_spec: format!("desk:{}", path.display()),
            model_id: model_id.to_string(),
            steps: losses.len(),
            losses,
        })
    }

    fn pseudo_perplexity(&self, docs: &[String], max_len: usize) -> Result<f64> {
        let seqs = self.seqs(docs, max_len);
        let per_doc = par::map(&seqs, |ids| {
            let mut nll = 0.0;
            let mut masked = ids.clone();
            for i in 0..ids.len() {
                masked[i] = self.mask;
                nll -= self.distribution_at(&masked, i)[ids[i]].max(1e-300).ln();
                masked[i] = ids[i];
            }
            (nll, ids.len())
        });
        let (nll, n) = per_doc.iter().fold((0.0, 0usize), |(a, b), (x, y)| (a + x, b + y));
        if n == 0 {
            return Err(Error::Validation("no tokens to score".into()));
        }
        Ok((nll / n as f64).exp())
    }
}

/// Words of the bundled adjective list.
pub fn bundled_adjectives() -> Vec<String> {
    include_str!("../../../data/lexicon/adjectives.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

const FRAMES: &[&str] = &[
    "{g} are {a} .",
    "{g} are known to be {a} .",
    "many say {g} are {a} .",
    "the report described {g} as {a} .",
    "i think {g} are really {a} .",
];

const GENERIC: &[&str] = &[
    "why are they so {a} ?",
    "why are people so {a} ?",
    "people are {a} .",
    "some people are very {a} .",
    "why is everyone so {a} ?",
];

/// Seeded synthetic training text: template and news-style sentences in
/// which each group leans on its own small set of adjectives.
pub fn synth_corpus(registry: &Registry, templates: &TemplateSet, adjectives: &[String], seed: u64, per_group: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for g in registry.groups() {
        let leaning: Vec<&String> = adjectives.choose_multiple(&mut rng, 12).collect();
        let ts: Vec<_> = templates.for_form(g.form).collect();
        let name = g.query_name().to_lowercase();
        for i in 0..per_group {
            let a = if rng.gen_bool(0.7) {
                leaning[rng.gen_range(0..leaning.len())]
            } else {
                &adjectives[rng.gen_range(0..adjectives.len())]
            };
            let s = if i % 2 == 0 {
                ts[rng.gen_range(0..ts.len())].fill(&name, a)
            } else {
                FRAMES[rng.gen_range(0..FRAMES.len())].replace("{g}", &name).replace("{a}", a)
            };
            out.push(s);
        }
    }
    for _ in 0..registry.len() * per_group / 4 {
        let a = &adjectives[rng.gen_range(0..adjectives.len())];
        out.push(GENERIC[rng.gen_range(0..GENERIC.len())].replace("{a}", a));
    }
    out.shuffle(&mut rng);
    out
}

/// Settings for [`pretrain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub shape: DeskShape,
    pub per_group: usize,
    pub training: TrainingConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            shape: DeskShape::default(),
            per_group: 16,
            training: TrainingConfig {
                epochs: 4,
                learning_rate: 1e-2,
                batch_size: 32,
                mask_prob: 0.25,
                max_len: 64,
                warmup_steps: 0,
            },
            seed: 7,
        }
    }
}

/// Vocabulary from the synthetic corpus plus `extra_words`, then train on
/// the synthetic corpus.
pub fn pretrain(
    model_id: &str,
    registry: &Registry,
    templates: &TemplateSet,
    extra_words: &[String],
    cfg: &PretrainConfig,
) -> Result<DeskModel> {
    let adjectives = bundled_adjectives();
    let corpus = synth_corpus(registry, templates, &adjectives, cfg.seed, cfg.per_group);
    let mut words: BTreeSet<String> = corpus.iter().flat_map(|s| tokenize(s)).collect();
    words.extend(adjectives);
    words.extend(extra_words.iter().flat_map(|w| tokenize(w)));
    let mut model = DeskModel::new(model_id, &words, cfg.shape.clone(), cfg.seed)?;
    let losses = model.train_in_place(&corpus, &cfg.training, cfg.seed)?;
    log::info!(
        "pretrained {model_id}: {} words, {} sentences, loss {:.3} -> {:.3}",
        model.vocab.len(),
        corpus.len(),
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(model)
}
