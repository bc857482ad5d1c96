use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::protocol::{Capabilities, TagResponse};
use super::{Backend, BackendDescriptor};
use crate::crf::CrfModel;
use crate::error::Result;

/// The built-in CRF. Sentences within a batch are decoded in parallel.
#[derive(Debug, Clone)]
pub struct BuiltinBackend {
    model: Arc<CrfModel>,
    next_id: u64,
}

impl BuiltinBackend {
    pub fn new(model: Arc<CrfModel>) -> Self {
        BuiltinBackend { model, next_id: 0 }
    }

    pub fn load(descriptor: &BackendDescriptor) -> Result<Self> {
        let model = CrfModel::load(Path::new(&descriptor.locator), None)?;
        Ok(Self::new(Arc::new(model)))
    }

    pub fn model(&self) -> &CrfModel {
        &self.model
    }
}

impl Backend for BuiltinBackend {
    fn capabilities(&mut self) -> Result<Capabilities> {
        Ok(Capabilities {
            has_confidence: true,
            labels: self.model.label_set().entity_types().into_iter().map(String::from).collect(),
        })
    }

    fn tag_batch(&mut self, sentences: &[Vec<String>]) -> Result<Vec<TagResponse>> {
        let first = self.next_id;
        self.next_id += sentences.len() as u64;
        let model = &self.model;
        Ok(sentences
            .par_iter()
            .enumerate()
            .map(|(i, tokens)| {
                let (tags, preds) = model.tags_and_predictions(tokens);
                TagResponse {
                    id: first + i as u64,
                    tags,
                    confidences: Some(preds.iter().map(|p| p.confidence.unwrap_or(0.0)).collect()),
                }
            })
            .collect())
    }
}
