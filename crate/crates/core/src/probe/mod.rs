//! Eliciting salient attributes from masked language models.
//!
//! For a group and template the attribute slot is masked and the backend's
//! distribution there gives the posterior `P(y | "Why are parents so y ?")`.
//! Masking the group as well gives the prior `P(y | "Why are [MASK] so y ?")`.
//! Typicality is `ln(post) - ln(prior)`; the top-k tokens by posterior are
//! re-ranked by it.

pub mod cache;
pub mod fixture;

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::registry::{Form, SocialGroup, Template, TemplateSet};

pub use cache::PredictionCache;
pub use fixture::FixtureBackend;

/// Attribute slots elicited per group.
pub const DEFAULT_K: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Casing {
    Cased,
    Uncased,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Which vocabulary entries count as words. Per-backend configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFilter {
    /// Control tokens such as `[CLS]`, `<s>`, `[MASK]`.
    pub special: BTreeSet<String>,
    /// Marks continuation pieces, e.g. `##` for WordPiece.
    pub continuation_prefix: Option<String>,
    /// Marks word-initial pieces, e.g. `Ġ` for byte-level BPE or `▁` for
    /// SentencePiece; pieces without it are continuations.
    pub word_prefix: Option<String>,
}

impl TokenFilter {
    /// The lowercased attribute a token stands for, or `None` for special
    /// tokens, punctuation, numerals and subword continuations.
    pub fn word_form(&self, token: &str) -> Option<String> {
        if self.special.contains(token) {
            return None;
        }
        if let Some(p) = &self.continuation_prefix {
            if token.starts_with(p.as_str()) {
                return None;
            }
        }
        let stripped = match &self.word_prefix {
            Some(p) => token.strip_prefix(p.as_str())?,
            None => token,
        };
        let ok = !stripped.is_empty()
            && stripped.chars().any(char::is_alphabetic)
            && stripped
                .chars()
                .all(|c| c.is_alphabetic() || c == '-' || c == '\'');
        ok.then(|| stripped.to_lowercase())
    }
}

/// The adapter contract every inference runtime implements.
pub trait MaskedLm: Send + Sync {
    fn model_id(&self) -> &str;
    fn vocabulary(&self) -> &Vocabulary;
    fn mask_token(&self) -> &str;
    fn casing(&self) -> Casing;
    fn token_filter(&self) -> &TokenFilter;
    /// Probabilities over the vocabulary at the `slot`-th mask token
    /// (counted left to right). Callers go through [`predict_mask`], which
    /// checks the slot and normalizes the result.
    fn mask_distribution(&self, text: &str, slot: usize) -> Result<Vec<f64>>;
}

/// Distribution over single vocabulary tokens at one mask slot.
pub fn predict_mask(backend: &dyn MaskedLm, text: &str, slot: usize) -> Result<Vec<f64>> {
    let available = text.matches(backend.mask_token()).count();
    if available == 0 {
        return Err(Error::NoMaskSlot(text.to_string()));
    }
    if slot >= available {
        return Err(Error::SlotOutOfRange { slot, available });
    }
    let mut probs = backend.mask_distribution(text, slot)?;
    if probs.len() != backend.vocabulary().len() {
        return Err(Error::Backend(format!(
            "distribution has {} entries for a vocabulary of {}",
            probs.len(),
            backend.vocabulary().len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Backend("distribution has negative or non-finite entries".into()));
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::Backend("distribution has zero mass".into()));
    }
    if (total - 1.0).abs() > 1e-12 {
        probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok(probs)
}

/// `ln(post) - ln(prior)`.
pub fn log_ratio(post: f64, prior: f64) -> f64 {
    post.ln() - prior.ln()
}

/// A template plus optional words between the template's "so" and the
/// attribute, e.g. "good at" for "Why are russians so good at [MASK] ?".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Prompt {
    pub template_id: u8,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub extension: String,
}

impl Prompt {
    pub fn base(template_id: u8) -> Self {
        Prompt {
            template_id,
            extension: String::new(),
        }
    }

    pub fn extended(template_id: u8, extension: &str) -> Self {
        Prompt {
            template_id,
            extension: extension.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase(),
        }
    }

    fn attr_text(&self, mask: &str) -> String {
        if self.extension.is_empty() {
            mask.to_string()
        } else {
            format!("{} {}", self.extension, mask)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub attribute: String,
    pub post_prob: f64,
    pub prior_prob: f64,
    pub typicality: f64,
    pub template_id: u8,
    pub rank_post: usize,
    pub rank_typicality: usize,
}

/// Predictions of one prompt, ordered by typicality rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatePredictions {
    pub prompt: Prompt,
    pub predictions: Vec<RankedPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub model_id: String,
    pub group: SocialGroup,
    pub k: usize,
    pub per_template: Vec<TemplatePredictions>,
    pub union: BTreeSet<String>,
}

impl PredictionSet {
    pub fn new(model_id: &str, group: SocialGroup, k: usize, per_template: Vec<TemplatePredictions>) -> Self {
        let union = per_template
            .iter()
            .flat_map(|t| t.predictions.iter().map(|p| p.attribute.to_lowercase()))
            .collect();
        PredictionSet {
            model_id: model_id.to_string(),
            group,
            k,
            per_template,
            union,
        }
    }

    pub fn template(&self, template_id: u8) -> Option<&TemplatePredictions> {
        self.per_template
            .iter()
            .find(|t| t.prompt.template_id == template_id && t.prompt.extension.is_empty())
    }

    /// Union of the top-`n` typicality-ranked attributes across templates.
    pub fn top_union(&self, n: usize) -> BTreeSet<String> {
        self.per_template
            .iter()
            .flat_map(|t| t.predictions.iter().take(n).map(|p| p.attribute.clone()))
            .collect()
    }
}

/// Rank one prompt from its posterior and prior distributions.
///
/// Non-word tokens are removed first, case variants collapse onto the
/// variant with the higher posterior, the top `k` by posterior are kept and
/// re-ranked by typicality. Ties break lexicographically on the attribute.
pub fn rank_predictions(
    vocab: &Vocabulary,
    filter: &TokenFilter,
    post: &[f64],
    prior: &[f64],
    k: usize,
    template_id: u8,
) -> Vec<RankedPrediction> {
    let mut best: HashMap<String, usize> = HashMap::new();
    for (i, token) in vocab.tokens().iter().enumerate() {
        if post[i] <= 0.0 || prior[i] <= 0.0 {
            continue;
        }
        let Some(word) = filter.word_form(token) else {
            continue;
        };
        best.entry(word)
            .and_modify(|j| {
                if post[i] > post[*j] {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let mut candidates: Vec<(String, usize)> = best.into_iter().collect();
    candidates.sort_by(|(a, i), (b, j)| post[*j].total_cmp(&post[*i]).then_with(|| a.cmp(b)));
    candidates.truncate(k);

    let mut ranked: Vec<RankedPrediction> = candidates
        .into_iter()
        .enumerate()
        .map(|(r, (attribute, i))| RankedPrediction {
            attribute,
            post_prob: post[i],
            prior_prob: prior[i],
            typicality: log_ratio(post[i], prior[i]),
            template_id,
            rank_post: r + 1,
            rank_typicality: 0,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.typicality
            .total_cmp(&a.typicality)
            .then_with(|| a.attribute.cmp(&b.attribute))
    });
    for (r, p) in ranked.iter_mut().enumerate() {
        p.rank_typicality = r + 1;
    }
    ranked
}

type PriorKey = (Form, u8, String);

/// Elicitation against one backend. Prior distributions do not depend on the
/// group and are computed once per prompt.
pub struct Elicitor<'a> {
    backend: &'a dyn MaskedLm,
    templates: &'a TemplateSet,
    priors: Mutex<HashMap<PriorKey, Arc<Vec<f64>>>>,
}

impl<'a> Elicitor<'a> {
    pub fn new(backend: &'a dyn MaskedLm, templates: &'a TemplateSet) -> Self {
        Elicitor {
            backend,
            templates,
            priors: Mutex::new(HashMap::new()),
        }
    }

    pub fn backend(&self) -> &dyn MaskedLm {
        self.backend
    }

    fn template(&self, form: Form, id: u8) -> Result<&Template> {
        self.templates
            .get(form, id)
            .ok_or_else(|| Error::Contract(format!("no {form} template with id {id}")))
    }

    /// The sentence whose single mask gives the posterior.
    pub fn post_text(&self, group: &SocialGroup, prompt: &Prompt) -> Result<String> {
        let t = self.template(group.form, prompt.template_id)?;
        crate::registry::render_query(group, t, Some(&prompt.attr_text(self.backend.mask_token())), "")
    }

    /// The sentence with both the group and the attribute masked, and the
    /// index of the attribute mask.
    pub fn prior_text(&self, form: Form, prompt: &Prompt) -> Result<(String, usize)> {
        let t = self.template(form, prompt.template_id)?;
        let mask = self.backend.mask_token();
        Ok((t.fill(mask, &prompt.attr_text(mask)), t.attr_slot_order()))
    }

    pub fn post(&self, group: &SocialGroup, prompt: &Prompt) -> Result<Vec<f64>> {
        predict_mask(self.backend, &self.post_text(group, prompt)?, 0)
    }

    pub fn prior(&self, form: Form, prompt: &Prompt) -> Result<Arc<Vec<f64>>> {
        let key = (form, prompt.template_id, prompt.extension.clone());
        if let Some(p) = self.priors.lock().expect("prior cache poisoned").get(&key) {
            return Ok(Arc::clone(p));
        }
        let (text, slot) = self.prior_text(form, prompt)?;
        let dist = Arc::new(predict_mask(self.backend, &text, slot)?);
        self.priors
            .lock()
            .expect("prior cache poisoned")
            .insert(key, Arc::clone(&dist));
        Ok(dist)
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::Contract("k must be positive".into()));
        }
        if k > self.backend.vocabulary().len() {
            return Err(Error::Contract(format!(
                "k = {k} exceeds the vocabulary size {}",
                self.backend.vocabulary().len()
            )));
        }
        Ok(())
    }

    pub fn elicit_prompt(&self, group: &SocialGroup, prompt: &Prompt, k: usize) -> Result<TemplatePredictions> {
        self.check_k(k)?;
        let post = self.post(group, prompt)?;
        let prior = self.prior(group.form, prompt)?;
        let predictions = rank_predictions(
            self.backend.vocabulary(),
            self.backend.token_filter(),
            &post,
            &prior,
            k,
            prompt.template_id,
        );
        Ok(TemplatePredictions {
            prompt: prompt.clone(),
            predictions,
        })
    }

    /// Top-k attributes for all five form-matching templates.
    pub fn elicit(&self, group: &SocialGroup, k: usize) -> Result<PredictionSet> {
        self.check_k(k)?;
        let per_template = self
            .templates
            .for_form(group.form)
            .map(|t| self.elicit_prompt(group, &Prompt::base(t.id), k))
            .collect::<Result<Vec<_>>>()?;
        Ok(PredictionSet::new(self.backend.model_id(), group.clone(), k, per_template))
    }

    /// [`Elicitor::elicit`] for many groups, in parallel, in input order.
    pub fn elicit_all(&self, groups: &[SocialGroup], k: usize) -> Vec<Result<PredictionSet>> {
        par::map(groups, |g| self.elicit(g, k))
    }

    /// Typicality of a single attribute token for a group and template.
    pub fn typicality(&self, group: &SocialGroup, prompt: &Prompt, attribute: &str) -> Result<f64> {
        let post = self.post(group, prompt)?;
        let prior = self.prior(group.form, prompt)?;
        let i = attribute_index(self.backend.vocabulary(), self.backend.token_filter(), &post, attribute)
            .ok_or_else(|| Error::UnreachableToken(attribute.to_string()))?;
        Ok(log_ratio(post[i], prior[i]))
    }
}

/// Vocabulary index of the word token for `attribute` (case-insensitive);
/// among case variants the one with the highest posterior wins.
pub fn attribute_index(vocab: &Vocabulary, filter: &TokenFilter, post: &[f64], attribute: &str) -> Option<usize> {
    let want = attribute.trim().to_lowercase();
    let mut best: Option<usize> = None;
    for (i, token) in vocab.tokens().iter().enumerate() {
        if filter.word_form(token).as_deref() == Some(want.as_str()) && best.is_none_or(|b| post[i] > post[b]) {
            best = Some(i);
        }
    }
    best
}

/// Whether `attribute` is representable as one word token of the backend.
pub fn is_reachable(vocab: &Vocabulary, filter: &TokenFilter, attribute: &str) -> bool {
    let want = attribute.trim().to_lowercase();
    vocab
        .tokens()
        .iter()
        .any(|t| filter.word_form(t).as_deref() == Some(want.as_str()))
}

/// Reachable word forms of a backend's vocabulary.
pub fn word_forms(backend: &dyn MaskedLm) -> BTreeSet<String> {
    let f = backend.token_filter();
    backend
        .vocabulary()
        .tokens()
        .iter()
        .filter_map(|t| f.word_form(t))
        .collect()
}

/// Elicitation through an optional prediction cache.
pub struct Prober<'a> {
    elicitor: Elicitor<'a>,
    cache: Option<PredictionCache>,
    k: usize,
}

impl<'a> Prober<'a> {
    pub fn new(backend: &'a dyn MaskedLm, templates: &'a TemplateSet, cache: Option<PredictionCache>, k: usize) -> Self {
        Prober {
            elicitor: Elicitor::new(backend, templates),
            cache,
            k,
        }
    }

    pub fn elicitor(&self) -> &Elicitor<'a> {
        &self.elicitor
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn predictions(&self, group: &SocialGroup) -> Result<PredictionSet> {
        let model_id = self.elicitor.backend().model_id();
        if let Some(cache) = &self.cache {
            match cache.load_predictions(model_id, group, self.k) {
                Ok(Some(set)) => return Ok(set),
                Ok(None) => {}
                Err(Error::Checksum { key }) => log::warn!("invalidated corrupt cache entry {key}"),
                Err(e) => return Err(e),
            }
        }
        let set = self.elicitor.elicit(group, self.k)?;
        if let Some(cache) = &self.cache {
            cache.cache_predictions(&set)?;
        }
        Ok(set)
    }

    pub fn prompt_predictions(&self, group: &SocialGroup, prompt: &Prompt) -> Result<TemplatePredictions> {
        let model_id = self.elicitor.backend().model_id();
        if let Some(cache) = &self.cache {
            match cache.load_prompt(model_id, group, prompt, self.k) {
                Ok(Some(p)) => return Ok(p),
                Ok(None) => {}
                Err(Error::Checksum { key }) => log::warn!("invalidated corrupt cache entry {key}"),
                Err(e) => return Err(e),
            }
        }
        let preds = self.elicitor.elicit_prompt(group, prompt, self.k)?;
        if let Some(cache) = &self.cache {
            cache.store_prompt(model_id, group, &preds, self.k)?;
        }
        Ok(preds)
    }

    pub fn predictions_all(&self, groups: &[SocialGroup]) -> Vec<Result<PredictionSet>> {
        par::map(groups, |g| self.predictions(g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Category;

    fn filter() -> TokenFilter {
        TokenFilter {
            special: ["[MASK]", "[CLS]"].into_iter().map(String::from).collect(),
            continuation_prefix: Some("##".into()),
            word_prefix: None,
        }
    }

    #[test]
    fn token_filter_keeps_only_words() {
        let f = filter();
        assert_eq!(f.word_form("Strict").as_deref(), Some("strict"));
        assert_eq!(f.word_form("well-read").as_deref(), Some("well-read"));
        for t in ["[MASK]", "##ing", "?", "1990", "a1", "..."] {
            assert_eq!(f.word_form(t), None, "{t}");
        }
        let bpe = TokenFilter {
            word_prefix: Some("Ġ".into()),
            ..TokenFilter::default()
        };
        assert_eq!(bpe.word_form("Ġloud").as_deref(), Some("loud"));
        assert_eq!(bpe.word_form("loud"), None);
    }

    #[test]
    fn log_ratio_basics() {
        assert_eq!(log_ratio(0.3, 0.3), 0.0);
        assert!((log_ratio(0.2, 0.05) - 4f64.ln()).abs() < 1e-12);
        assert!(log_ratio(0.01, 0.2) < 0.0);
    }

    #[test]
    fn ranking_orders_and_dedups() {
        let vocab = Vocabulary::new(
            ["[MASK]", "strict", "Strict", "tall", "?", "##ly", "kind"]
                .into_iter()
                .map(String::from)
                .collect(),
        )
        .unwrap();
        let post = [0.1, 0.3, 0.2, 0.2, 0.1, 0.05, 0.05];
        let prior = [0.1, 0.3, 0.01, 0.1, 0.2, 0.09, 0.2];
        let ranked = rank_predictions(&vocab, &filter(), &post, &prior, 10, 1);
        let attrs: Vec<_> = ranked.iter().map(|p| p.attribute.as_str()).collect();
        // strict (post .3, prior .3) -> 0; tall ln 2; kind ln .25
        assert_eq!(attrs, ["tall", "strict", "kind"]);
        assert_eq!(ranked.iter().map(|p| p.rank_typicality).collect::<Vec<_>>(), [1, 2, 3]);
        let mut post_ranks: Vec<_> = ranked.iter().map(|p| (p.rank_post, p.attribute.as_str())).collect();
        post_ranks.sort();
        assert_eq!(post_ranks, [(1, "strict"), (2, "tall"), (3, "kind")]);
        assert_eq!(ranked[1].typicality, 0.0);

        let top1 = rank_predictions(&vocab, &filter(), &post, &prior, 1, 1);
        assert_eq!(top1.len(), 1);
        assert_eq!(top1[0].attribute, "strict");
    }

    #[test]
    fn prompt_extension_is_normalized() {
        let p = Prompt::extended(1, "  Good   AT ");
        assert_eq!(p.extension, "good at");
        assert_eq!(p.attr_text("[MASK]"), "good at [MASK]");
        assert_eq!(Prompt::base(2).attr_text("<mask>"), "<mask>");
    }

    #[test]
    fn prior_text_masks_the_whole_group() {
        let backend = fixture::tests::tiny_backend();
        let ts = TemplateSet::bundled();
        let e = Elicitor::new(&backend, &ts);
        let (text, slot) = e.prior_text(Form::People, &Prompt::base(1)).unwrap();
        assert_eq!(text, "Why are [MASK] so [MASK] ?");
        assert_eq!(slot, 1);
        let g = SocialGroup::new("black people", Category::Race).unwrap();
        assert_eq!(e.post_text(&g, &Prompt::extended(1, "bad with")).unwrap(), "Why are black people so bad with [MASK] ?");
    }
}
