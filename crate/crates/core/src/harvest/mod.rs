//! Harvesting stereotype attributes from search-engine autocompletes.
//!
//! Queries are the attribute-less prefixes of the templates ("Why are
//! russians so"). Raw suggestions go through [`curate`] before they become
//! [`StereotypeRecord`]s.

pub mod curate;
pub mod dataset;
pub mod engines;
pub mod transport;

use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::registry::{Category, SocialGroup, TemplateSet};

pub use curate::{curate, curate_detailed, CurationConfig, CurationOutcome, DropRule, PosGate};
pub use dataset::{category_counts, load_dataset, write_dataset};
pub use transport::{SuggestionTransport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Google,
    Yahoo,
    #[serde(rename = "duckduckgo")]
    DuckDuckGo,
    /// The same attribute was returned by two or more engines.
    Multiple,
}

impl Engine {
    /// Engines that can actually be queried.
    pub const SEARCH: [Engine; 3] = [Engine::Google, Engine::Yahoo, Engine::DuckDuckGo];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Google => "google",
            Engine::Yahoo => "yahoo",
            Engine::DuckDuckGo => "duckduckgo",
            Engine::Multiple => "multiple",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "google" => Ok(Engine::Google),
            "yahoo" => Ok(Engine::Yahoo),
            "duckduckgo" | "ddg" => Ok(Engine::DuckDuckGo),
            "multiple" => Ok(Engine::Multiple),
            other => Err(Error::Validation(format!("unknown engine {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSuggestion {
    pub query: String,
    /// The suggestion exactly as the engine returned it.
    pub completion: String,
    pub engine: Engine,
    /// Seconds since the Unix epoch.
    pub fetched_at: u64,
}

/// One curated (query, group, attribute, engine) sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StereotypeRecord {
    pub query: String,
    pub category: Category,
    pub group: String,
    pub attribute: String,
    pub engine: Engine,
}

impl StereotypeRecord {
    pub fn validate(&self) -> Result<()> {
        if self.attribute.is_empty() || self.attribute.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!(
                "attribute {:?} must be a single whitespace-free token",
                self.attribute
            )));
        }
        if self.group.trim().is_empty() {
            return Err(Error::Validation("record has an empty group".into()));
        }
        if self.query.trim().is_empty() {
            return Err(Error::Validation("record has an empty query".into()));
        }
        Ok(())
    }

    /// The registry group this record refers to, built from the record itself.
    pub fn social_group(&self) -> Result<SocialGroup> {
        SocialGroup::new(&self.group, self.category)
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Ask one engine for completions of `query`. The engine's order is kept and
/// an empty list is a valid answer.
pub fn fetch_suggestions(
    query: &str,
    engine: Engine,
    transport: &dyn SuggestionTransport,
) -> Result<Vec<RawSuggestion>> {
    if engine == Engine::Multiple {
        return Err(Error::Contract("`multiple` is not a fetchable engine".into()));
    }
    let payload = transport.fetch(engine, query)?;
    let fetched_at = now_secs();
    Ok(engines::decode_payload(engine, &payload)?
        .into_iter()
        .filter(|s| !s.trim().is_empty())
        .map(|completion| RawSuggestion {
            query: query.to_string(),
            completion,
            engine,
            fetched_at,
        })
        .collect())
}

/// A suggestion that failed to fetch, kept for the partial-failure summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FetchFailure {
    pub group: String,
    pub engine: Engine,
    pub query: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct HarvestOutput {
    pub records: Vec<StereotypeRecord>,
    pub multi_word: Vec<curate::SidecarEntry>,
    pub review: Vec<curate::ReviewItem>,
    pub failures: Vec<FetchFailure>,
}

/// Issue all five form-matching templates for every group against every
/// engine, then curate per group.
pub fn harvest(
    groups: &[SocialGroup],
    templates: &TemplateSet,
    engines: &[Engine],
    transport: &dyn SuggestionTransport,
    config: &CurationConfig,
) -> HarvestOutput {
    let per_group = par::map(groups, |group| {
        let mut raw = Vec::new();
        let mut failures = Vec::new();
        for template in templates.for_form(group.form) {
            let query = template.prefix(&group.query_name());
            for &engine in engines {
                match fetch_suggestions(&query, engine, transport) {
                    Ok(list) => raw.extend(list),
                    Err(e) => failures.push(FetchFailure {
                        group: group.name.clone(),
                        engine,
                        query: query.clone(),
                        error: e.to_string(),
                    }),
                }
            }
        }
        (curate_detailed(&raw, group, config), failures)
    });

    let mut out = HarvestOutput::default();
    for (outcome, failures) in per_group {
        out.records.extend(outcome.records);
        out.multi_word.extend(outcome.multi_word);
        out.review.extend(outcome.review);
        out.failures.extend(failures);
    }
    out
}
