//! JSON-lines stereotype dataset.

use std::collections::BTreeMap;
use std::path::Path;

use super::StereotypeRecord;
use crate::artifact::write_atomic;
use crate::error::{Error, Result};
use crate::registry::Category;

/// Serialize records, one JSON object per line with the fields `query,
/// category, group, attribute, engine` in that order.
pub fn to_jsonl(records: &[StereotypeRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        r.validate()?;
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(records: &[StereotypeRecord], path: &Path) -> Result<()> {
    write_atomic(path, to_jsonl(records)?.as_bytes())
}

pub fn parse_jsonl(text: &str, source_name: &str) -> Result<Vec<StereotypeRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: StereotypeRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(source_name, i + 1, format!("schema violation: {e}")))?;
        record
            .validate()
            .map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<StereotypeRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn category_counts(records: &[StereotypeRecord]) -> BTreeMap<Category, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.category).or_insert(0) += 1;
    }
    out
}
