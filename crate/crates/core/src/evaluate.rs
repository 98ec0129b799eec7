//! Recall@k of harvested stereotypes against typicality-ranked predictions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harvest::StereotypeRecord;
use crate::par;
use crate::probe::{PredictionSet, Prober, Prompt};
use crate::registry::{Category, SocialGroup, TemplateSet};

/// Largest k a recall grid may ask for.
pub const MAX_K: usize = 200;
pub const OVERALL: &str = "overall";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Lowercased string equality.
    #[default]
    Exact,
    /// Equality after crude suffix stripping; for sensitivity checks only.
    Stemmed,
}

/// Light suffix stripper used by [`MatchMode::Stemmed`].
pub fn crude_stem(word: &str) -> String {
    let w = word.to_lowercase();
    if w.len() <= 4 {
        return w;
    }
    if let Some(stem) = w.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suffix in ["ing", "ed", "ly"] {
        if let Some(stem) = w.strip_suffix(suffix) {
            return stem.to_string();
        }
    }
    for suffix in ["sses", "shes", "ches", "xes"] {
        if w.ends_with(suffix) {
            return w[..w.len() - 2].to_string();
        }
    }
    match w.strip_suffix('s') {
        Some(stem) if !stem.ends_with('s') => stem.to_string(),
        _ => w,
    }
}

impl MatchMode {
    fn key(self, word: &str) -> String {
        match self {
            MatchMode::Exact => word.to_lowercase(),
            MatchMode::Stemmed => crude_stem(word),
        }
    }
}

/// Where recall gets its rankings from.
pub trait PredictionSource: Sync {
    fn model_id(&self) -> &str;
    /// Attributes for a group and prompt, best typicality first. `Ok(None)`
    /// when the source has nothing for this group.
    fn ranked(&self, group: &SocialGroup, prompt: &Prompt) -> Result<Option<Vec<String>>>;
    /// Whether the attribute is a single word token for this model.
    fn is_reachable(&self, attribute: &str) -> bool;
}

/// A fixed table of rankings, e.g. loaded from a cache or built by hand.
#[derive(Debug, Clone, Default)]
pub struct StaticSource {
    pub model_id: String,
    pub table: HashMap<(String, Prompt), Vec<String>>,
    pub words: BTreeSet<String>,
}

impl StaticSource {
    pub fn new(model_id: &str, words: BTreeSet<String>) -> Self {
        StaticSource {
            model_id: model_id.to_string(),
            table: HashMap::new(),
            words: words.into_iter().map(|w| w.to_lowercase()).collect(),
        }
    }

    pub fn insert(&mut self, group: &str, prompt: Prompt, ranked: Vec<String>) {
        self.table.insert((group.to_lowercase(), prompt), ranked);
    }

    pub fn add_set(&mut self, set: &PredictionSet) {
        for t in &set.per_template {
            let ranked = t.predictions.iter().map(|p| p.attribute.clone()).collect();
            self.insert(&set.group.name, t.prompt.clone(), ranked);
        }
    }
}

impl PredictionSource for StaticSource {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn ranked(&self, group: &SocialGroup, prompt: &Prompt) -> Result<Option<Vec<String>>> {
        Ok(self.table.get(&(group.key(), prompt.clone())).cloned())
    }

    fn is_reachable(&self, attribute: &str) -> bool {
        self.words.contains(&attribute.to_lowercase())
    }
}

/// Rankings computed (or read from cache) through a backend on demand.
pub struct BackendSource<'a> {
    prober: Prober<'a>,
    words: BTreeSet<String>,
}

impl<'a> BackendSource<'a> {
    pub fn new(prober: Prober<'a>) -> Self {
        let words = crate::probe::word_forms(prober.elicitor().backend());
        BackendSource { prober, words }
    }
}

impl PredictionSource for BackendSource<'_> {
    fn model_id(&self) -> &str {
        self.prober.elicitor().backend().model_id()
    }

    fn ranked(&self, group: &SocialGroup, prompt: &Prompt) -> Result<Option<Vec<String>>> {
        let preds = self.prober.prompt_predictions(group, prompt)?;
        Ok(Some(preds.predictions.into_iter().map(|p| p.attribute).collect()))
    }

    fn is_reachable(&self, attribute: &str) -> bool {
        self.words.contains(&attribute.to_lowercase())
    }
}

/// The prompt a record was harvested with: the template whose prefix starts
/// the stored query (longest match), plus any extension words after it.
/// Falls back to template 1 when nothing matches.
pub fn resolve_prompt(record: &StereotypeRecord, group: &SocialGroup, templates: &TemplateSet) -> Prompt {
    let query = record.query.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let mut best: Option<(usize, Prompt)> = None;
    for t in templates.for_form(group.form) {
        let prefix = t.prefix(&record.group).to_lowercase();
        let prompt = if query == prefix {
            Prompt::base(t.id)
        } else if let Some(rest) = query.strip_prefix(&format!("{prefix} ")) {
            Prompt::extended(t.id, rest)
        } else {
            continue;
        };
        if best.as_ref().is_none_or(|(len, _)| prefix.len() > *len) {
            best = Some((prefix.len(), prompt));
        }
    }
    best.map(|(_, p)| p).unwrap_or_else(|| Prompt::base(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub model_id: String,
    pub k_grid: Vec<usize>,
    /// Category (plus `overall`) -> recall at each k of the grid.
    pub curves: BTreeMap<String, Vec<f64>>,
    /// Category (plus `overall`) -> fraction of attributes that are single tokens.
    pub reachability: BTreeMap<String, f64>,
    /// Category (plus `overall`) -> number of evaluated pairs.
    pub counts: BTreeMap<String, usize>,
    pub match_mode: MatchMode,
    pub skipped_groups: Vec<String>,
    pub warnings: Vec<String>,
}

fn check_grid(k_grid: &[usize]) -> Result<Vec<usize>> {
    if k_grid.is_empty() {
        return Err(Error::Contract("k grid is empty".into()));
    }
    if let Some(&bad) = k_grid.iter().find(|&&k| k == 0 || k > MAX_K) {
        return Err(Error::Contract(format!("k = {bad} outside [1, {MAX_K}]")));
    }
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    Ok(grid)
}

/// Recall@k per category. A pair counts as recalled at k when its attribute
/// is among the first k typicality-ranked predictions for the record's
/// group and prompt. Unreachable attributes stay in the denominator.
pub fn recall_at_k(
    dataset: &[StereotypeRecord],
    source: &dyn PredictionSource,
    templates: &TemplateSet,
    k_grid: &[usize],
    mode: MatchMode,
) -> Result<RecallReport> {
    let grid = check_grid(k_grid)?;

    struct Item {
        category: Category,
        group_key: String,
        prompt: Prompt,
        attribute: String,
    }
    let mut items = Vec::with_capacity(dataset.len());
    for r in dataset {
        let group = r.social_group()?;
        items.push(Item {
            category: r.category,
            group_key: group.key(),
            prompt: resolve_prompt(r, &group, templates),
            attribute: r.attribute.to_lowercase(),
        });
    }

    // one ranking request per distinct (group, prompt)
    let mut keys: BTreeMap<(String, Prompt), SocialGroup> = BTreeMap::new();
    for (r, it) in dataset.iter().zip(&items) {
        keys.entry((it.group_key.clone(), it.prompt.clone()))
            .or_insert_with(|| r.social_group().expect("validated above"));
    }
    let keys: Vec<((String, Prompt), SocialGroup)> = keys.into_iter().collect();
    let fetched = par::map(&keys, |((_, prompt), group)| source.ranked(group, prompt));

    let mut rankings: HashMap<(String, Prompt), HashMap<String, usize>> = HashMap::new();
    let mut skipped = BTreeSet::new();
    let mut warnings = Vec::new();
    for (((gk, prompt), group), result) in keys.into_iter().zip(fetched) {
        match result {
            Ok(Some(list)) => {
                let mut ranks = HashMap::new();
                for (i, a) in list.iter().enumerate() {
                    ranks.entry(mode.key(a)).or_insert(i + 1);
                }
                rankings.insert((gk, prompt), ranks);
            }
            Ok(None) => {
                skipped.insert(group.name.clone());
            }
            Err(e) => {
                warnings.push(format!("group {:?}: {e}", group.name));
                skipped.insert(group.name.clone());
            }
        }
    }

    // category -> (hits per k, reachable, total)
    let mut acc: BTreeMap<String, (Vec<usize>, usize, usize)> = BTreeMap::new();
    for it in &items {
        let Some(ranks) = rankings.get(&(it.group_key.clone(), it.prompt.clone())) else {
            continue;
        };
        let rank = ranks.get(&mode.key(&it.attribute)).copied();
        let reachable = source.is_reachable(&it.attribute);
        for name in [it.category.as_str(), OVERALL] {
            let e = acc.entry(name.to_string()).or_insert_with(|| (vec![0; grid.len()], 0, 0));
            for (slot, &k) in grid.iter().enumerate() {
                if rank.is_some_and(|r| r <= k) {
                    e.0[slot] += 1;
                }
            }
            e.1 += usize::from(reachable);
            e.2 += 1;
        }
    }

    for c in Category::ALL {
        if !acc.contains_key(c.as_str()) {
            warnings.push(format!("category {c} has no evaluated pairs; curve omitted"));
        }
    }

    let mut curves = BTreeMap::new();
    let mut reachability = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (name, (hits, reachable, total)) in acc {
        let n = total as f64;
        curves.insert(name.clone(), hits.iter().map(|&h| h as f64 / n).collect());
        reachability.insert(name.clone(), reachable as f64 / n);
        counts.insert(name, total);
    }

    Ok(RecallReport {
        model_id: source.model_id().to_string(),
        k_grid: grid,
        curves,
        reachability,
        counts,
        match_mode: mode,
        skipped_groups: skipped.into_iter().collect(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallDiff {
    pub model_a: String,
    pub model_b: String,
    pub k_grid: Vec<usize>,
    /// Category -> `recall_b - recall_a` at each k.
    pub deltas: BTreeMap<String, Vec<f64>>,
}

pub fn recall_diff(a: &RecallReport, b: &RecallReport) -> Result<RecallDiff> {
    if a.k_grid != b.k_grid {
        return Err(Error::Contract(format!("k grids differ: {:?} vs {:?}", a.k_grid, b.k_grid)));
    }
    let ca: Vec<_> = a.curves.keys().collect();
    let cb: Vec<_> = b.curves.keys().collect();
    if ca != cb {
        return Err(Error::Contract(format!("categories differ: {ca:?} vs {cb:?}")));
    }
    let deltas = a
        .curves
        .iter()
        .map(|(cat, ra)| {
            let rb = &b.curves[cat];
            (cat.clone(), ra.iter().zip(rb).map(|(x, y)| y - x).collect())
        })
        .collect();
    Ok(RecallDiff {
        model_a: a.model_id.clone(),
        model_b: b.model_id.clone(),
        k_grid: a.k_grid.clone(),
        deltas,
    })
}
