//! Autocomplete endpoint parameters and payload decoders.

use serde_json::Value;

use super::Engine;
use crate::error::{Error, Result};

impl Engine {
    pub fn default_endpoint(self) -> &'static str {
        match self {
            Engine::Google => "http://suggestqueries.google.com/complete/search",
            Engine::Yahoo => "http://sugg.search.yahoo.net/sg",
            Engine::DuckDuckGo => "https://duckduckgo.com/ac",
            Engine::Multiple => "",
        }
    }

    pub fn query_params(self, query: &str) -> Vec<(&'static str, String)> {
        match self {
            Engine::Google => vec![("client", "firefox".into()), ("hl", "en".into()), ("q", query.into())],
            Engine::Yahoo => vec![("output", "json".into()), ("nresults", "10".into()), ("command", query.into())],
            Engine::DuckDuckGo => vec![("kl", "us-en".into()), ("q", query.into())],
            Engine::Multiple => vec![],
        }
    }
}

fn decode_err(engine: Engine, message: impl Into<String>) -> Error {
    Error::Decode {
        engine: engine.as_str().to_string(),
        message: message.into(),
    }
}

/// Extract the suggestion strings from a raw payload, preserving order.
pub fn decode_payload(engine: Engine, payload: &str) -> Result<Vec<String>> {
    let value: Value = serde_json::from_str(payload).map_err(|e| decode_err(engine, e.to_string()))?;
    match engine {
        // ["query", ["s1", "s2", ...], ...]
        Engine::Google => {
            let list = value
                .get(1)
                .and_then(Value::as_array)
                .ok_or_else(|| decode_err(engine, "expected [query, [suggestions...]]"))?;
            list.iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| decode_err(engine, "suggestion is not a string"))
                })
                .collect()
        }
        // {"gossip": {"results": [{"key": "..."}, ...]}}
        Engine::Yahoo => {
            let gossip = value
                .get("gossip")
                .ok_or_else(|| decode_err(engine, "missing gossip object"))?;
            let Some(results) = gossip.get("results") else {
                return Ok(Vec::new());
            };
            let results = results
                .as_array()
                .ok_or_else(|| decode_err(engine, "gossip.results is not an array"))?;
            results
                .iter()
                .map(|r| {
                    r.get("key")
                        .and_then(Value::as_str)
                        .map(str::to_string)
                        .ok_or_else(|| decode_err(engine, "result without key"))
                })
                .collect()
        }
        // [{"phrase": "..."}, ...]
        Engine::DuckDuckGo => {
            let list = value
                .as_array()
                .ok_or_else(|| decode_err(engine, "expected an array of phrases"))?;
            list.iter()
                .map(|r| {
                    r.get("phrase")
                        .and_then(Value::as_str)
                        .map(str::to_string)
                        .ok_or_else(|| decode_err(engine, "entry without phrase"))
                })
                .collect()
        }
        Engine::Multiple => Err(decode_err(engine, "not a fetchable engine")),
    }
}
