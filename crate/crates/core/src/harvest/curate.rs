//! Cleaning raw autocomplete suggestions into stereotype records.
//!
//! Rules run in a fixed order:
//!
//! 1. drop completions that do not read as `<query> <adjective>` (part-of-speech gate),
//! 2. drop trend-sensitive references (blocklist),
//! 3. drop neutral, non-stereotype completions (blocklist),
//! 4. drop multi-word completions unless an extension pattern such as
//!    "good at" isolates a single key term; the others go to a sidecar.
//!
//! Survivors are lowercased, deduplicated per (group, attribute) and tagged
//! `multiple` when two or more engines returned them.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Engine, RawSuggestion, StereotypeRecord};
use crate::error::{Error, Result};
use crate::registry::SocialGroup;

const DEFAULT_ADJECTIVES: &str = include_str!("../../../../data/lexicon/adjectives.txt");
const DEFAULT_TREND_BLOCKLIST: &str = include_str!("../../../../data/curation/trend_blocklist.txt");
const DEFAULT_NEUTRAL_BLOCKLIST: &str = include_str!("../../../../data/curation/neutral_blocklist.txt");
const DEFAULT_NON_ADJECTIVES: &str = include_str!("../../../../data/curation/non_adjectives.txt");

/// Approximate adjective / past-participle detector.
///
/// Order of checks: explicit reject list, explicit adjective list, suffix
/// heuristics. Anything else is rejected.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosGate {
    pub adjectives: BTreeSet<String>,
    pub rejects: BTreeSet<String>,
    pub suffixes: Vec<String>,
}

impl PosGate {
    pub fn accepts(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        if w.is_empty() || !w.chars().all(|c| c.is_alphabetic() || c == '-' || c == '\'') {
            return false;
        }
        if self.rejects.contains(&w) {
            return false;
        }
        if self.adjectives.contains(&w) {
            return true;
        }
        self.suffixes.iter().any(|s| w.len() > s.len() + 2 && w.ends_with(s.as_str()))
    }
}

fn word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

fn read_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(word_list(&text))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub gate: PosGate,
    /// Phrases whose presence anywhere in a completion drops it (rule 2).
    pub trend_blocklist: BTreeSet<String>,
    /// Completions equal to one of these are dropped (rule 3).
    pub neutral_blocklist: BTreeSet<String>,
    /// Multi-word prefixes that can be moved into the query (rule 4),
    /// longest match wins.
    pub extension_patterns: Vec<String>,
    /// Send rule-1 rejects to a review queue instead of dropping them.
    pub manual_review: bool,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            gate: PosGate {
                adjectives: word_list(DEFAULT_ADJECTIVES),
                rejects: word_list(DEFAULT_NON_ADJECTIVES),
                suffixes: [
                    "ous", "ful", "ive", "able", "ible", "ish", "less", "ic", "al", "ent", "ant", "ary", "ed",
                    "y",
                ]
                .into_iter()
                .map(String::from)
                .collect(),
            },
            trend_blocklist: word_list(DEFAULT_TREND_BLOCKLIST),
            neutral_blocklist: word_list(DEFAULT_NEUTRAL_BLOCKLIST),
            extension_patterns: ["good at", "bad at", "good with", "bad with", "obsessed with", "afraid of"]
                .into_iter()
                .map(String::from)
                .collect(),
            manual_review: false,
        }
    }
}

impl CurationConfig {
    /// Load overrides from a directory holding any of `adjectives.txt`,
    /// `non_adjectives.txt`, `trend_blocklist.txt`, `neutral_blocklist.txt`
    /// and `extension_patterns.txt`. Missing files keep the defaults.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut cfg = CurationConfig::default();
        let p = dir.join("adjectives.txt");
        if p.exists() {
            cfg.gate.adjectives = read_list(&p)?;
        }
        let p = dir.join("non_adjectives.txt");
        if p.exists() {
            cfg.gate.rejects = read_list(&p)?;
        }
        let p = dir.join("trend_blocklist.txt");
        if p.exists() {
            cfg.trend_blocklist = read_list(&p)?;
        }
        let p = dir.join("neutral_blocklist.txt");
        if p.exists() {
            cfg.neutral_blocklist = read_list(&p)?;
        }
        let p = dir.join("extension_patterns.txt");
        if p.exists() {
            cfg.extension_patterns = read_list(&p)?.into_iter().collect();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropRule {
    NotAPrefixMatch,
    Ungrammatical,
    TrendSensitive,
    Neutral,
    MultiWord,
}

/// A multi-word completion kept aside instead of discarded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub group: String,
    pub query: String,
    pub completion: String,
    pub engine: Engine,
}

/// A rule-1 reject awaiting a human decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub group: String,
    pub query: String,
    pub completion: String,
    pub engine: Engine,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct CurationOutcome {
    pub records: Vec<StereotypeRecord>,
    pub multi_word: Vec<SidecarEntry>,
    pub review: Vec<ReviewItem>,
    pub dropped: Vec<(String, DropRule)>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Strip a case-insensitive prefix, returning the rest.
fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let t = text.trim_start();
    if t.len() >= prefix.len() && t.is_char_boundary(prefix.len()) && t[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&t[prefix.len()..])
    } else {
        None
    }
}

fn clean_words(rest: &str) -> Vec<String> {
    rest.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

enum Verdict {
    Keep { query: String, attribute: String },
    Drop(DropRule),
    Review,
    Sidecar,
}

fn judge(query: &str, completion: &str, cfg: &CurationConfig) -> Verdict {
    let Some(rest) = strip_prefix_ci(completion, query.trim()) else {
        return Verdict::Drop(DropRule::NotAPrefixMatch);
    };
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        // the completion continued the last query word, e.g. "so" -> "sore"
        return Verdict::Drop(DropRule::NotAPrefixMatch);
    }
    let words = clean_words(rest);
    if words.is_empty() {
        return Verdict::Drop(DropRule::Ungrammatical);
    }
    let joined = words.join(" ");
    let pattern = cfg
        .extension_patterns
        .iter()
        .filter(|p| joined == **p || joined.starts_with(&format!("{p} ")))
        .max_by_key(|p| p.len());

    // a query that already ends in an extension, e.g. from a stored record
    let query_lower = query.trim().to_lowercase();
    let extended_query = cfg
        .extension_patterns
        .iter()
        .any(|p| query_lower.ends_with(&format!(" {p}")));

    // rule 1
    if pattern.is_none() && !extended_query && !cfg.gate.accepts(&words[0]) {
        return if cfg.manual_review {
            Verdict::Review
        } else {
            Verdict::Drop(DropRule::Ungrammatical)
        };
    }
    // rule 2
    if cfg.trend_blocklist.iter().any(|b| contains_phrase(&joined, b)) {
        return Verdict::Drop(DropRule::TrendSensitive);
    }
    // rule 3
    if cfg.neutral_blocklist.contains(&joined) {
        return Verdict::Drop(DropRule::Neutral);
    }
    // rule 4
    if words.len() == 1 {
        return Verdict::Keep {
            query: query.trim().to_string(),
            attribute: words[0].clone(),
        };
    }
    if let Some(p) = pattern {
        let mut tail: Vec<&String> = words[p.split_whitespace().count()..].iter().collect();
        while tail.len() > 1 && tail[0].ends_with("ing") {
            tail.remove(0);
        }
        if tail.len() == 1 && !cfg.neutral_blocklist.contains(tail[0].as_str()) {
            return Verdict::Keep {
                query: format!("{} {}", query.trim(), p),
                attribute: tail[0].clone(),
            };
        }
    }
    Verdict::Sidecar
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    let h: Vec<&str> = haystack.split(' ').collect();
    let p: Vec<&str> = phrase.split_whitespace().collect();
    !p.is_empty() && h.windows(p.len()).any(|w| w == p.as_slice())
}

/// Curate the raw suggestions of one group into records.
pub fn curate(raw: &[RawSuggestion], group: &SocialGroup, cfg: &CurationConfig) -> Vec<StereotypeRecord> {
    curate_detailed(raw, group, cfg).records
}

/// Like [`curate`], also returning the sidecar, review queue and drop log.
pub fn curate_detailed(raw: &[RawSuggestion], group: &SocialGroup, cfg: &CurationConfig) -> CurationOutcome {
    let mut out = CurationOutcome::default();
    let group_key = group.key();
    let record_group = group.query_name();

    // attribute -> (query, engines); insertion order kept separately
    let mut order: Vec<String> = Vec::new();
    let mut merged: HashMap<String, (String, BTreeSet<Engine>)> = HashMap::new();
    let mut sidecar_seen = HashSet::new();

    for s in raw {
        if !s.query.to_lowercase().contains(&group_key) {
            log::warn!("suggestion query {:?} does not mention group {:?}; skipped", s.query, group.name);
            out.dropped.push((s.completion.clone(), DropRule::NotAPrefixMatch));
            continue;
        }
        match judge(&s.query, &s.completion, cfg) {
            Verdict::Keep { query, attribute } => {
                let entry = merged.entry(attribute.clone()).or_insert_with(|| {
                    order.push(attribute.clone());
                    (capitalize(&query), BTreeSet::new())
                });
                entry.1.insert(s.engine);
            }
            Verdict::Drop(rule) => out.dropped.push((s.completion.clone(), rule)),
            Verdict::Review => out.review.push(ReviewItem {
                group: record_group.clone(),
                query: s.query.clone(),
                completion: s.completion.clone(),
                engine: s.engine,
            }),
            Verdict::Sidecar => {
                if sidecar_seen.insert((s.completion.to_lowercase(), s.engine)) {
                    out.multi_word.push(SidecarEntry {
                        group: record_group.clone(),
                        query: s.query.clone(),
                        completion: s.completion.clone(),
                        engine: s.engine,
                    });
                }
            }
        }
    }

    for attribute in order {
        let (query, engines) = merged.remove(&attribute).expect("ordered key present");
        let engine = if engines.len() >= 2 || engines.contains(&Engine::Multiple) {
            Engine::Multiple
        } else {
            *engines.iter().next().expect("at least one engine")
        };
        out.records.push(StereotypeRecord {
            query,
            category: group.category,
            group: record_group.clone(),
            attribute,
            engine,
        });
    }
    out
}

/// Turn records back into suggestions, e.g. to re-run curation on a dataset.
pub fn records_to_raw(records: &[StereotypeRecord]) -> Vec<RawSuggestion> {
    records
        .iter()
        .map(|r| RawSuggestion {
            query: r.query.clone(),
            completion: format!("{} {}", r.query, r.attribute),
            engine: r.engine,
            fetched_at: 0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Category;

    fn raw(query: &str, completion: &str, engine: Engine) -> RawSuggestion {
        RawSuggestion {
            query: query.into(),
            completion: completion.into(),
            engine,
            fetched_at: 0,
        }
    }

    fn russians() -> SocialGroup {
        SocialGroup::new("Russians", Category::Race).unwrap()
    }

    #[test]
    fn good_at_rewrite_isolates_key_term() {
        let cfg = CurationConfig::default();
        let q = "Why are russians so";
        let got = curate(&[raw(q, "why are russians so good at playing chess", Engine::Google)], &russians(), &cfg);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].query, "Why are russians so good at");
        assert_eq!(got[0].attribute, "chess");
        assert_eq!(got[0].group, "russians");
        assert_eq!(got[0].engine, Engine::Google);
    }

    #[test]
    fn neutral_completion_is_dropped() {
        let cfg = CurationConfig::default();
        let q = "Why are russians so";
        let out = curate_detailed(&[raw(q, "why are russians so called", Engine::Yahoo)], &russians(), &cfg);
        assert!(out.records.is_empty());
        assert_eq!(out.dropped[0].1, DropRule::Neutral);
    }

    #[test]
    fn trend_sensitive_reference_is_dropped() {
        let cfg = CurationConfig::default();
        let asians = SocialGroup::new("Asians", Category::Race).unwrap();
        let q = "Why are asians so";
        let out = curate_detailed(&[raw(q, "why are asians so good at league of legends", Engine::Google)], &asians, &cfg);
        assert!(out.records.is_empty());
        assert_eq!(out.dropped[0].1, DropRule::TrendSensitive);
    }

    #[test]
    fn same_attribute_from_two_engines_collapses() {
        let cfg = CurationConfig::default();
        let g = SocialGroup::new("British people", Category::Race).unwrap();
        let q = "Why are british people so";
        let got = curate(
            &[
                raw(q, "why are british people so polite", Engine::Google),
                raw(q, "Why are british people so Polite", Engine::Yahoo),
                raw(q, "why are british people so pale", Engine::Yahoo),
            ],
            &g,
            &cfg,
        );
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].attribute, "polite");
        assert_eq!(got[0].engine, Engine::Multiple);
        assert_eq!(got[1].attribute, "pale");
        assert_eq!(got[1].engine, Engine::Yahoo);
    }

    #[test]
    fn non_adjectives_fail_the_gate_or_go_to_review() {
        let mut cfg = CurationConfig::default();
        let q = "Why are russians so";
        let s = [raw(q, "why are russians so much", Engine::Google)];
        let out = curate_detailed(&s, &russians(), &cfg);
        assert!(out.records.is_empty());
        assert_eq!(out.dropped[0].1, DropRule::Ungrammatical);

        cfg.manual_review = true;
        let out = curate_detailed(&s, &russians(), &cfg);
        assert!(out.records.is_empty() && out.dropped.is_empty());
        assert_eq!(out.review.len(), 1);
    }

    #[test]
    fn multi_word_goes_to_sidecar() {
        let cfg = CurationConfig::default();
        let q = "Why are russians so";
        let out = curate_detailed(&[raw(q, "why are russians so tall and strong", Engine::Google)], &russians(), &cfg);
        assert!(out.records.is_empty());
        assert_eq!(out.multi_word.len(), 1);
    }

    #[test]
    fn continuation_of_query_word_is_not_a_match() {
        let cfg = CurationConfig::default();
        let q = "Why are russians so";
        let out = curate_detailed(&[raw(q, "why are russians sore", Engine::Google)], &russians(), &cfg);
        assert!(out.records.is_empty());
    }

    #[test]
    fn curation_is_idempotent_on_records() {
        let cfg = CurationConfig::default();
        let q = "Why are russians so";
        let first = curate(
            &[
                raw(q, "why are russians so good at playing chess", Engine::Google),
                raw(q, "why are russians so strong", Engine::Google),
                raw(q, "why are russians so strong", Engine::DuckDuckGo),
                raw(q, "why are russians so cold", Engine::Yahoo),
            ],
            &russians(),
            &cfg,
        );
        let second = curate(&records_to_raw(&first), &russians(), &cfg);
        assert_eq!(first, second);
    }

    #[test]
    fn gate_heuristics() {
        let gate = CurationConfig::default().gate;
        for w in ["polite", "tall", "athletic", "dangerous", "hated", "greedy"] {
            assert!(gate.accepts(w), "{w}");
        }
        for w in ["much", "many", "the", "in", "2020", "very"] {
            assert!(!gate.accepts(w), "{w}");
        }
    }
}
