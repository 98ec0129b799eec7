//! Probing masked language models for stereotypes harvested from search
//! engine autocomplete, and tracking how fine-tuning shifts them.

pub mod artifact;
pub mod backend;
pub mod bridge;
pub mod config;
pub mod desk;
pub mod emotions;
pub mod error;
pub mod evaluate;
pub mod finetune;
pub mod harvest;
pub mod par;
pub mod plots;
pub mod probe;
pub mod registry;
pub mod rsa;

pub use error::{Error, Result};
