use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::features::{featurize, CompiledSentence, FeatureConfig, FeatureIndex};
use super::inference::{forward, viterbi, LabelMask, Lattice, Potentials};
use super::labels::LabelSet;
use super::train::TrainingSummary;
use crate::conll::{extract_entities, EntitySpan};
use crate::embeddings::{load_text_vectors, EmbeddingStore};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "nerbias-crf";
pub const MODEL_VERSION: u32 = 1;

/// A predicted entity with its posterior probability, when the backend provides one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityPrediction {
    pub span: EntitySpan,
    pub confidence: Option<f64>,
}

/// Linear-chain CRF.
///
/// Weights are one flat vector: emission weights `feature × label`, then
/// transition weights `from × to`, then start weights per label.
#[derive(Debug, Clone)]
pub struct CrfModel {
    label_set: LabelSet,
    feature_config: FeatureConfig,
    features: FeatureIndex,
    weights: Vec<f64>,
    l2_strength: f64,
    training: Option<TrainingSummary>,
    embeddings: Option<Arc<EmbeddingStore>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    labels: LabelSet,
    feature_config: FeatureConfig,
    l2_strength: f64,
    features: Vec<String>,
    weights: Vec<f64>,
    #[serde(default)]
    training: Option<TrainingSummary>,
}

impl CrfModel {
    pub fn new(
        label_set: LabelSet,
        feature_config: FeatureConfig,
        features: FeatureIndex,
        weights: Vec<f64>,
        l2_strength: f64,
    ) -> Result<Self> {
        feature_config.validate()?;
        let l = label_set.len();
        let expected = features.len() * l + l * l + l;
        if weights.len() != expected {
            return Err(Error::validation(format!(
                "expected {expected} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::validation("weights must be finite"));
        }
        if !(l2_strength >= 0.0 && l2_strength.is_finite()) {
            return Err(Error::validation("l2 strength must be nonnegative"));
        }
        Ok(CrfModel {
            label_set,
            feature_config,
            features,
            weights,
            l2_strength,
            training: None,
            embeddings: None,
        })
    }

    /// All-zero weights over the given feature inventory.
    pub fn zeros(
        label_set: LabelSet,
        feature_config: FeatureConfig,
        features: FeatureIndex,
        l2_strength: f64,
    ) -> Result<Self> {
        let l = label_set.len();
        let n = features.len() * l + l * l + l;
        CrfModel::new(label_set, feature_config, features, vec![0.0; n], l2_strength)
    }

    pub fn with_embeddings(mut self, store: Arc<EmbeddingStore>) -> Result<Self> {
        match &self.feature_config.embeddings {
            Some(src) if src.dimension == store.dimension() => {
                self.embeddings = Some(store);
                Ok(self)
            }
            Some(src) => Err(Error::validation(format!(
                "model expects {}-dimensional embeddings, store has {}",
                src.dimension,
                store.dimension()
            ))),
            None => Err(Error::validation("model was trained without embedding features")),
        }
    }

    pub fn embeddings(&self) -> Option<&EmbeddingStore> {
        self.embeddings.as_deref()
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.feature_config
    }

    pub fn features(&self) -> &FeatureIndex {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn l2_strength(&self) -> f64 {
        self.l2_strength
    }

    pub fn training_summary(&self) -> Option<&TrainingSummary> {
        self.training.as_ref()
    }

    pub(crate) fn set_training_summary(&mut self, s: TrainingSummary) {
        self.training = Some(s);
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::validation("weight vector length mismatch"));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn n_labels(&self) -> usize {
        self.label_set.len()
    }

    pub fn emission_index(&self, feature: u32, label: usize) -> usize {
        feature as usize * self.n_labels() + label
    }

    pub fn transition_index(&self, from: usize, to: usize) -> usize {
        let l = self.n_labels();
        self.features.len() * l + from * l + to
    }

    pub fn start_index(&self, label: usize) -> usize {
        let l = self.n_labels();
        self.features.len() * l + l * l + label
    }

    /// Feature ids and values per token; unknown feature names are dropped.
    pub fn compile(&self, tokens: &[String]) -> CompiledSentence {
        (0..tokens.len())
            .map(|i| {
                featurize(tokens, i, &self.feature_config, self.embeddings.as_deref())
                    .into_iter()
                    .filter_map(|(name, v)| self.features.get(&name).map(|id| (id, v)))
                    .filter(|(_, v)| *v != 0.0)
                    .collect()
            })
            .collect()
    }

    pub(crate) fn potentials_scaled(
        &self,
        compiled: &CompiledSentence,
        weights: &[f64],
        scale: f64,
    ) -> Potentials {
        let l = self.n_labels();
        let mut emissions = vec![0.0; compiled.len() * l];
        for (t, feats) in compiled.iter().enumerate() {
            let row = &mut emissions[t * l..(t + 1) * l];
            for &(f, v) in feats {
                let base = f as usize * l;
                for (y, e) in row.iter_mut().enumerate() {
                    *e += v * weights[base + y];
                }
            }
            if scale != 1.0 {
                row.iter_mut().for_each(|e| *e *= scale);
            }
        }
        let mut transitions = vec![f64::NEG_INFINITY; l * l];
        for from in 0..l {
            for to in 0..l {
                if self.label_set.transition_allowed(from, to) {
                    transitions[from * l + to] = scale * weights[self.transition_index(from, to)];
                }
            }
        }
        let start = (0..l)
            .map(|y| {
                if self.label_set.start_allowed(y) {
                    scale * weights[self.start_index(y)]
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        Potentials {
            n_labels: l,
            emissions,
            transitions,
            start,
        }
    }

    pub fn potentials_compiled(&self, compiled: &CompiledSentence) -> Potentials {
        self.potentials_scaled(compiled, &self.weights, 1.0)
    }

    pub fn potentials(&self, tokens: &[String]) -> Potentials {
        self.potentials_compiled(&self.compile(tokens))
    }

    pub fn lattice(&self, tokens: &[String]) -> Lattice {
        Lattice::new(self.potentials(tokens))
    }

    /// Highest-scoring legal tag sequence.
    pub fn viterbi(&self, tokens: &[String]) -> Vec<String> {
        if tokens.is_empty() {
            return Vec::new();
        }
        viterbi(&self.potentials(tokens))
            .into_iter()
            .map(|y| self.label_set.get(y).to_string())
            .collect()
    }

    pub fn log_partition(&self, tokens: &[String]) -> f64 {
        if tokens.is_empty() {
            return 0.0;
        }
        forward(&self.potentials(tokens), None).1
    }

    /// Mask admitting exactly the labelings in which `span` is one whole entity.
    pub fn span_mask(&self, len: usize, span: &EntitySpan) -> Result<Option<LabelMask>> {
        if span.start >= span.end || span.end > len {
            return Err(Error::validation(format!(
                "span [{}, {}) is invalid for a sentence of {len} tokens",
                span.start, span.end
            )));
        }
        let begin = self
            .label_set
            .index_of(&format!("B-{}", span.label))
            .ok_or_else(|| Error::validation(format!("unknown entity type {:?}", span.label)))?;
        let inside = self.label_set.index_of(&format!("I-{}", span.label));
        if span.len() > 1 && inside.is_none() {
            return Ok(None);
        }
        let mut mask = LabelMask::all(len, self.n_labels());
        mask.restrict(span.start, |y| y == begin);
        for t in span.start + 1..span.end {
            mask.restrict(t, |y| Some(y) == inside);
        }
        if span.end < len {
            if let Some(i) = inside {
                mask.restrict(span.end, |y| y != i);
            }
        }
        Ok(Some(mask))
    }

    /// Posterior probability that `span` is exactly one entity of its type.
    pub fn entity_confidence(&self, tokens: &[String], span: &EntitySpan) -> Result<f64> {
        let Some(mask) = self.span_mask(tokens.len(), span)? else {
            return Ok(0.0);
        };
        let pot = self.potentials(tokens);
        Ok(confidence_from(&pot, &mask))
    }

    /// Viterbi decoding with a constrained-posterior confidence on each entity.
    pub fn decode_with_confidence(&self, tokens: &[String]) -> Vec<EntityPrediction> {
        if tokens.is_empty() {
            return Vec::new();
        }
        let pot = self.potentials(tokens);
        let tags: Vec<&str> = viterbi(&pot)
            .into_iter()
            .map(|y| self.label_set.get(y))
            .collect();
        extract_entities(&tags)
            .into_iter()
            .map(|span| {
                let confidence = match self.span_mask(tokens.len(), &span) {
                    Ok(Some(mask)) => Some(confidence_from(&pot, &mask)),
                    _ => Some(0.0),
                };
                EntityPrediction { span, confidence }
            })
            .collect()
    }

    pub fn tags_and_predictions(&self, tokens: &[String]) -> (Vec<String>, Vec<EntityPrediction>) {
        let preds = self.decode_with_confidence(tokens);
        let spans: Vec<EntitySpan> = preds.iter().map(|p| p.span.clone()).collect();
        (crate::conll::tags_from_spans(tokens.len(), &spans), preds)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            labels: self.label_set.clone(),
            feature_config: self.feature_config.clone(),
            l2_strength: self.l2_strength,
            features: self.features.names().to_vec(),
            weights: self.weights.clone(),
            training: self.training.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    /// Parses a saved model. Embedding features are left unattached.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.format != MODEL_FORMAT {
            return Err(Error::validation(format!("not a model file (format {:?})", f.format)));
        }
        if f.version != MODEL_VERSION {
            return Err(Error::validation(format!("unsupported model version {}", f.version)));
        }
        let mut m = CrfModel::new(
            f.labels,
            f.feature_config,
            FeatureIndex::from_names(f.features)?,
            f.weights,
            f.l2_strength,
        )?;
        m.training = f.training;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
        file.write_all(self.to_json()?.as_bytes())
            .map_err(|e| Error::from(e).in_file(path))?;
        Ok(())
    }

    /// Loads a model and, when it uses embeddings, the vectors from
    /// `embeddings` or else from the path recorded at training time.
    pub fn load(path: &Path, embeddings: Option<&Path>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let model = CrfModel::from_json(&text).map_err(|e| e.in_file(path))?;
        let Some(src) = model.feature_config.embeddings.clone() else {
            return Ok(model);
        };
        let vec_path = embeddings
            .map(Path::to_path_buf)
            .or(src.path)
            .ok_or_else(|| Error::validation("model needs an embedding file"))?;
        let file = fs::File::open(&vec_path).map_err(|e| Error::from(e).in_file(&vec_path))?;
        let store = load_text_vectors(BufReader::new(file), Some(src.dimension))
            .map_err(|e| e.in_file(&vec_path))?;
        model.with_embeddings(Arc::new(store))
    }
}

fn confidence_from(pot: &Potentials, mask: &LabelMask) -> f64 {
    let (_, log_z) = forward(pot, None);
    let (_, log_zc) = forward(pot, Some(mask));
    (log_zc - log_z).exp().clamp(0.0, 1.0)
}
