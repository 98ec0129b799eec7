//! Emotion profiles of attribute sets over a word-affect lexicon.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::probe::PredictionSet;

/// The ten affect dimensions, in vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Fear,
    Joy,
    Sadness,
    Trust,
    Surprise,
    Anticipation,
    Disgust,
    Anger,
    Negative,
    Positive,
}

pub const DIMS: usize = 10;

impl Emotion {
    pub const ALL: [Emotion; DIMS] = [
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Trust,
        Emotion::Surprise,
        Emotion::Anticipation,
        Emotion::Disgust,
        Emotion::Anger,
        Emotion::Negative,
        Emotion::Positive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Trust => "trust",
            Emotion::Surprise => "surprise",
            Emotion::Anticipation => "anticipation",
            Emotion::Disgust => "disgust",
            Emotion::Anger => "anger",
            Emotion::Negative => "negative",
            Emotion::Positive => "positive",
        }
    }

    pub fn index(self) -> usize {
        Emotion::ALL.iter().position(|&e| e == self).expect("listed")
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str() == s.trim().to_lowercase())
            .ok_or_else(|| Error::Validation(format!("unknown affect {s:?}")))
    }
}

/// Word -> binary affect flags.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmotionLexicon {
    entries: HashMap<String, [bool; DIMS]>,
}

impl EmotionLexicon {
    /// Parse `word<TAB>affect<TAB>0|1` lines. Blank lines and `#` comments
    /// are ignored; affects a word never mentions count as 0.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut entries: HashMap<String, [bool; DIMS]> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(source_name, n + 1, format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let word = fields[0].trim().to_lowercase();
            if word.is_empty() {
                return Err(Error::parse(source_name, n + 1, "empty word"));
            }
            let affect: Emotion = fields[1]
                .parse()
                .map_err(|_| Error::parse(source_name, n + 1, format!("unknown affect {:?}", fields[1])))?;
            let flag = match fields[2].trim() {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(source_name, n + 1, format!("flag must be 0 or 1, got {other:?}"))),
            };
            entries.entry(word).or_default()[affect.index()] |= flag;
        }
        if entries.is_empty() {
            return Err(Error::parse(source_name, 0, "lexicon is empty"));
        }
        Ok(EmotionLexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The small hand-annotated lexicon used by tests and examples.
    pub fn fixture() -> Self {
        Self::parse(include_str!("../../../data/lexicon/fixture_lexicon.txt"), "fixture_lexicon.txt")
            .expect("bundled fixture lexicon parses")
    }

    pub fn get(&self, word: &str) -> Option<&[bool; DIMS]> {
        self.entries.get(&word.to_lowercase())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionVector {
    pub group: String,
    /// Fraction of covered attributes flagged with each affect, in [`Emotion::ALL`] order.
    pub scores: [f64; DIMS],
    pub counts: [usize; DIMS],
    /// Attributes found in the lexicon.
    pub covered: usize,
    /// Attributes in the set.
    pub total: usize,
}

impl EmotionVector {
    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.total as f64
    }

    pub fn score(&self, e: Emotion) -> f64 {
        self.scores[e.index()]
    }
}

/// Emotion vector of an attribute set: per affect, the number of covered
/// attributes carrying it divided by the number of covered attributes.
pub fn emotion_vector(group: &str, attributes: &BTreeSet<String>, lexicon: &EmotionLexicon) -> Result<EmotionVector> {
    let attrs: BTreeSet<String> = attributes.iter().map(|a| a.trim().to_lowercase()).collect();
    if attrs.is_empty() {
        return Err(Error::EmptyAttributes);
    }
    let mut counts = [0usize; DIMS];
    let mut covered = 0;
    for a in &attrs {
        if let Some(flags) = lexicon.get(a) {
            covered += 1;
            for (c, &f) in counts.iter_mut().zip(flags) {
                *c += usize::from(f);
            }
        }
    }
    if covered == 0 {
        return Err(Error::NoCoverage { group: group.to_string() });
    }
    let mut scores = [0.0; DIMS];
    for (s, &c) in scores.iter_mut().zip(&counts) {
        *s = c as f64 / covered as f64;
    }
    Ok(EmotionVector {
        group: group.to_string(),
        scores,
        counts,
        covered,
        total: attrs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionProfiles {
    pub model_id: String,
    /// Group name -> vector.
    pub groups: BTreeMap<String, EmotionVector>,
    /// Group name -> reason it has no vector.
    pub skipped: BTreeMap<String, String>,
}

impl EmotionProfiles {
    pub fn get(&self, group: &str) -> Option<&EmotionVector> {
        self.groups.get(group)
    }
}

/// Profile every prediction set of one model from its attribute union.
pub fn profile_model(sets: &[PredictionSet], lexicon: &EmotionLexicon) -> Result<EmotionProfiles> {
    let Some(first) = sets.first() else {
        return Err(Error::Contract("no prediction sets to profile".into()));
    };
    if let Some(other) = sets.iter().find(|s| s.model_id != first.model_id) {
        return Err(Error::Contract(format!(
            "mixed models: {} and {}",
            first.model_id, other.model_id
        )));
    }
    let results = par::map(sets, |s| emotion_vector(&s.group.name, &s.union, lexicon));
    let mut groups = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for (s, r) in sets.iter().zip(results) {
        match r {
            Ok(v) => {
                groups.insert(s.group.name.clone(), v);
            }
            Err(e @ (Error::NoCoverage { .. } | Error::EmptyAttributes)) => {
                log::warn!("{}: {e}", s.group.name);
                skipped.insert(s.group.name.clone(), e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EmotionProfiles {
        model_id: first.model_id.clone(),
        groups,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn order_is_fixed() {
        let names: Vec<_> = Emotion::ALL.iter().map(|e| e.as_str()).collect();
        assert_eq!(
            names,
            ["fear", "joy", "sadness", "trust", "surprise", "anticipation", "disgust", "anger", "negative", "positive"]
        );
    }

    #[test]
    fn selfish_and_vocal() {
        let lex = EmotionLexicon::fixture();
        let v = emotion_vector("g", &set(&["selfish", "vocal"]), &lex).unwrap();
        assert_eq!(v.covered, 2);
        assert_eq!(v.total, 2);
        assert_eq!(v.score(Emotion::Negative), 0.5);
        assert_eq!(v.score(Emotion::Anger), 0.5);
        assert_eq!(v.score(Emotion::Disgust), 0.5);
        assert_eq!(v.score(Emotion::Joy), 0.0);
        assert_eq!(v.score(Emotion::Positive), 0.0);
        assert!(v.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn uncovered_words_only_shrink_coverage() {
        let lex = EmotionLexicon::fixture();
        let a = emotion_vector("g", &set(&["selfish", "vocal"]), &lex).unwrap();
        let b = emotion_vector("g", &set(&["selfish", "vocal", "zzzunknown"]), &lex).unwrap();
        assert_eq!(a.scores, b.scores);
        assert_eq!(b.total, 3);
        assert!((b.coverage() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_coverage_and_empty() {
        let lex = EmotionLexicon::fixture();
        assert!(matches!(
            emotion_vector("g", &set(&["zzz"]), &lex),
            Err(Error::NoCoverage { group }) if group == "g"
        ));
        assert!(matches!(emotion_vector("g", &set(&[]), &lex), Err(Error::EmptyAttributes)));
    }

    #[test]
    fn malformed_lexicon_lines() {
        assert!(matches!(
            EmotionLexicon::parse("bad\tglee\t1\n", "x"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            EmotionLexicon::parse("ok\tjoy\t1\nbad\tjoy\t2\n", "x"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(EmotionLexicon::parse("# nothing\n", "x").is_err());
    }
}
