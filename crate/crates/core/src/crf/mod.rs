//! Built-in linear-chain CRF tagger.

pub mod features;
pub mod inference;
pub mod labels;
pub mod model;
pub mod train;

pub use features::{featurize, EmbeddingSource, FeatureConfig, FeatureIndex};
pub use inference::{Lattice, LabelMask, Potentials};
pub use labels::LabelSet;
pub use model::{CrfModel, EntityPrediction};
pub use train::{log_likelihood_and_gradient, train, LabeledSentence, TrainConfig, TrainingSummary};
