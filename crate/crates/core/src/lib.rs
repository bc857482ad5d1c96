//! Demographic bias auditing for named entity recognition.
//!
//! The crate builds controlled evaluation corpora by placing first names
//! from demographic name lists into fixed sentence contexts, tags them with
//! the built-in CRF or an external tagger, and measures how often each name
//! is recognized as a person, and with what confidence.

pub mod backend;
pub mod cli;
pub mod conll;
pub mod crf;
pub mod embeddings;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod registry;
pub mod report;
pub mod templates;

pub use error::{Error, Result};
