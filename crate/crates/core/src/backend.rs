//! Opening backends from spec strings.
//!
//! - `fixture:<path>`: lookup-table backend (JSON)
//! - `desk:<path>`: native small masked LM (JSON weights)
//! - `bridge:<name>`: checkpoint served by the Python helper

use std::path::Path;

use crate::bridge::BridgeBackend;
use crate::desk::DeskModel;
use crate::error::{Error, Result};
use crate::finetune::TrainableMlm;
use crate::probe::{FixtureBackend, MaskedLm};

pub enum Backend {
    Fixture(FixtureBackend),
    Desk(DeskModel),
    Bridge(BridgeBackend),
}

const KINDS: [&str; 3] = ["fixture", "desk", "bridge"];

/// Whether `s` looks like a backend spec rather than a path.
pub fn is_model_spec(s: &str) -> bool {
    s.split_once(':').is_some_and(|(kind, rest)| KINDS.contains(&kind) && !rest.is_empty())
}

impl Backend {
    pub fn open(spec: &str) -> Result<Self> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::Validation(format!("backend spec {spec:?} is not <kind>:<target>")))?;
        match kind {
            "fixture" => Ok(Backend::Fixture(FixtureBackend::load(Path::new(rest))?)),
            "desk" => Ok(Backend::Desk(DeskModel::load(Path::new(rest))?)),
            "bridge" => Ok(Backend::Bridge(BridgeBackend::open(rest)?)),
            _ => Err(Error::Validation(format!(
                "unknown backend kind {kind:?}; expected one of {}",
                KINDS.join(", ")
            ))),
        }
    }

    pub fn mlm(&self) -> &dyn MaskedLm {
        match self {
            Backend::Fixture(b) => b,
            Backend::Desk(b) => b,
            Backend::Bridge(b) => b,
        }
    }

    /// `None` for backends that cannot be trained.
    pub fn trainable(&self) -> Option<&dyn TrainableMlm> {
        match self {
            Backend::Fixture(_) => None,
            Backend::Desk(b) => Some(b),
            Backend::Bridge(b) => Some(b),
        }
    }
}
