use std::path::PathBuf;

use thiserror::Error;

use crate::harvest::transport::TransportError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Transport(#[from] TransportError),

    #[error("could not decode {engine} payload: {message}")]
    Decode { engine: String, message: String },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("sentence has no mask slot: {0:?}")]
    NoMaskSlot(String),

    #[error("mask slot {slot} out of range, sentence has {available}")]
    SlotOutOfRange { slot: usize, available: usize },

    #[error("attribute {0:?} is not a single vocabulary token")]
    UnreachableToken(String),

    #[error("no attribute of group {group:?} is covered by the lexicon")]
    NoCoverage { group: String },

    #[error("attribute set is empty")]
    EmptyAttributes,

    #[error("checksum mismatch for cache entry {key}")]
    Checksum { key: String },

    #[error("result undefined: {0}")]
    Undefined(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("render error in field {field}: {message}")]
    Render { field: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Contract(_) => "contract",
            Error::Io { .. } => "io",
            Error::Transport(_) => "transport",
            Error::Decode { .. } => "decode",
            Error::Backend(_) => "backend",
            Error::NoMaskSlot(_) => "no_mask_slot",
            Error::SlotOutOfRange { .. } => "slot_out_of_range",
            Error::UnreachableToken(_) => "unreachable_token",
            Error::NoCoverage { .. } => "no_coverage",
            Error::EmptyAttributes => "empty_attributes",
            Error::Checksum { .. } => "checksum",
            Error::Undefined(_) => "undefined",
            Error::Json(_) => "json",
            Error::Render { .. } => "render",
        }
    }
}
