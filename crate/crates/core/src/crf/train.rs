//! Regularized maximum-likelihood training.
//!
//! The objective is the mean conditional log-likelihood minus
//! `l2 / 2 · ‖w‖²`. Optimization is mini-batch stochastic gradient ascent
//! with a decaying step size, and early stopping on held-out likelihood when
//! the corpus is large enough to split.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, CompiledSentence, FeatureConfig, FeatureIndex, EMBEDDING_PREFIX};
use super::inference::Lattice;
use super::labels::LabelSet;
use super::model::CrfModel;
use crate::conll::ConllSentence;
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};

/// Tokens with gold IOB2 tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

impl From<&ConllSentence> for LabeledSentence {
    fn from(s: &ConllSentence) -> Self {
        LabeledSentence {
            tokens: s.words(),
            tags: s.tags(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub features: FeatureConfig,
    pub l2_strength: f64,
    pub learning_rate: f64,
    /// Step size at epoch e is `learning_rate / (1 + decay · e)`.
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Share of the corpus held out for early stopping (needs ≥ 10 sentences).
    pub holdout_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            features: FeatureConfig::default(),
            l2_strength: 1e-3,
            learning_rate: 0.5,
            decay: 0.05,
            epochs: 30,
            batch_size: 8,
            holdout_fraction: 0.1,
            patience: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step_size: f64,
    /// Regularized mean log-likelihood on the training portion.
    pub objective: f64,
    pub heldout_log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub config: TrainConfig,
    pub n_train: usize,
    pub n_heldout: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub best_epoch: usize,
    pub epochs: Vec<EpochLog>,
}

/// Interns every feature that fires in the corpus, in corpus order.
pub fn build_feature_index(
    corpus: &[LabeledSentence],
    config: &FeatureConfig,
    store: Option<&EmbeddingStore>,
) -> FeatureIndex {
    let mut index = FeatureIndex::default();
    if let Some(src) = &config.embeddings {
        for k in 0..src.dimension {
            index.intern(&format!("{EMBEDDING_PREFIX}{k}"));
        }
    }
    for s in corpus {
        for i in 0..s.tokens.len() {
            for (name, _) in featurize(&s.tokens, i, config, store) {
                index.intern(&name);
            }
        }
    }
    index
}

struct Example {
    compiled: CompiledSentence,
    gold: Vec<usize>,
}

fn prepare(model: &CrfModel, batch: &[LabeledSentence]) -> Result<Vec<Example>> {
    batch
        .iter()
        .map(|s| {
            if s.tokens.len() != s.tags.len() {
                return Err(Error::validation("token and tag counts differ"));
            }
            if s.tokens.is_empty() {
                return Err(Error::validation("empty training sentence"));
            }
            let gold = s
                .tags
                .iter()
                .map(|t| {
                    model
                        .label_set()
                        .index_of(t)
                        .ok_or_else(|| Error::validation(format!("unknown gold tag {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Example {
                compiled: model.compile(&s.tokens),
                gold,
            })
        })
        .collect()
}

/// Sparse gradient accumulator over a dense buffer.
struct GradBuffer {
    values: Vec<f64>,
    touched: Vec<usize>,
    marked: Vec<bool>,
    track: bool,
}

impl GradBuffer {
    fn new(n: usize, track: bool) -> Self {
        GradBuffer {
            values: vec![0.0; n],
            touched: Vec::new(),
            marked: if track { vec![false; n] } else { Vec::new() },
            track,
        }
    }

    #[inline]
    fn add(&mut self, i: usize, v: f64) {
        if self.track && !self.marked[i] {
            self.marked[i] = true;
            self.touched.push(i);
        }
        self.values[i] += v;
    }

    fn clear(&mut self) {
        for &i in &self.touched {
            self.values[i] = 0.0;
            self.marked[i] = false;
        }
        self.touched.clear();
    }
}

/// Adds `coef · ∂ log p(gold | x) / ∂w` to `grad` and returns `log p(gold | x)`.
fn accumulate(
    model: &CrfModel,
    ex: &Example,
    weights: &[f64],
    scale: f64,
    coef: f64,
    grad: &mut GradBuffer,
) -> Result<f64> {
    let l = model.n_labels();
    let pot = model.potentials_scaled(&ex.compiled, weights, scale);
    let mut gold_score = pot.start[ex.gold[0]];
    for (t, &y) in ex.gold.iter().enumerate() {
        gold_score += pot.emission(t, y);
        if t > 0 {
            gold_score += pot.transition(ex.gold[t - 1], y);
        }
    }
    if gold_score == f64::NEG_INFINITY {
        return Err(Error::validation("gold tag sequence violates IOB2 transitions"));
    }
    let lattice = Lattice::new(pot);
    for (t, feats) in ex.compiled.iter().enumerate() {
        let marg: Vec<f64> = (0..l).map(|y| lattice.node_marginal(t, y)).collect();
        for &(f, v) in feats {
            grad.add(model.emission_index(f, ex.gold[t]), coef * v);
            for (y, p) in marg.iter().enumerate() {
                if *p != 0.0 {
                    grad.add(model.emission_index(f, y), -coef * p * v);
                }
            }
        }
        if t == 0 {
            grad.add(model.start_index(ex.gold[0]), coef);
            for (y, p) in marg.iter().enumerate() {
                grad.add(model.start_index(y), -coef * p);
            }
        } else {
            grad.add(model.transition_index(ex.gold[t - 1], ex.gold[t]), coef);
            for from in 0..l {
                for to in 0..l {
                    if model.label_set().transition_allowed(from, to) {
                        let p = lattice.edge_marginal(t, from, to);
                        grad.add(model.transition_index(from, to), -coef * p);
                    }
                }
            }
        }
    }
    Ok(gold_score - lattice.log_partition)
}

fn mean_log_likelihood(model: &CrfModel, examples: &[Example], weights: &[f64]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let total: f64 = examples
        .iter()
        .map(|ex| {
            let pot = model.potentials_scaled(&ex.compiled, weights, 1.0);
            let mut s = pot.start[ex.gold[0]];
            for (t, &y) in ex.gold.iter().enumerate() {
                s += pot.emission(t, y);
                if t > 0 {
                    s += pot.transition(ex.gold[t - 1], y);
                }
            }
            s - super::inference::forward(&pot, None).1
        })
        .sum();
    total / examples.len() as f64
}

fn l2_penalty(l2: f64, weights: &[f64]) -> f64 {
    0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Regularized mean log-likelihood of `batch` and its exact gradient.
pub fn log_likelihood_and_gradient(
    model: &CrfModel,
    batch: &[LabeledSentence],
) -> Result<(f64, Vec<f64>)> {
    let examples = prepare(model, batch)?;
    let weights = model.weights();
    let mut grad = GradBuffer::new(weights.len(), false);
    let coef = if examples.is_empty() {
        0.0
    } else {
        1.0 / examples.len() as f64
    };
    let mut ll = 0.0;
    for ex in &examples {
        ll += accumulate(model, ex, weights, 1.0, coef, &mut grad)?;
    }
    let l2 = model.l2_strength();
    let objective = ll * coef - l2_penalty(l2, weights);
    let mut g = grad.values;
    for (gi, w) in g.iter_mut().zip(weights) {
        *gi -= l2 * w;
    }
    Ok((objective, g))
}

/// Trains a model on `corpus`. Deterministic for a fixed `config.seed`.
pub fn train(
    config: &TrainConfig,
    corpus: &[LabeledSentence],
    store: Option<Arc<EmbeddingStore>>,
) -> Result<CrfModel> {
    if corpus.is_empty() {
        return Err(Error::validation("training corpus is empty"));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::validation("batch size and learning rate must be positive"));
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::validation("holdout fraction must lie in [0, 1)"));
    }
    config.features.validate()?;
    if config.features.embeddings.is_some() && store.is_none() {
        return Err(Error::validation("embedding features enabled but no vectors supplied"));
    }

    let label_set =
        LabelSet::from_tags(corpus.iter().flat_map(|s| s.tags.iter().map(String::as_str)))?;
    let index = build_feature_index(corpus, &config.features, store.as_deref());
    let mut model = CrfModel::zeros(label_set, config.features.clone(), index, config.l2_strength)?;
    if let Some(store) = store {
        model = model.with_embeddings(store)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let n_heldout = if corpus.len() >= 10 && config.holdout_fraction > 0.0 {
        order.shuffle(&mut rng);
        ((corpus.len() as f64 * config.holdout_fraction).ceil() as usize).min(corpus.len() - 1)
    } else {
        0
    };
    let heldout_idx: Vec<usize> = order[..n_heldout].to_vec();
    let mut train_idx: Vec<usize> = order[n_heldout..].to_vec();
    train_idx.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>();
    let train_examples = prepare(&model, &pick(&train_idx))?;
    let heldout_examples = prepare(&model, &pick(&heldout_idx))?;

    let l2 = config.l2_strength;
    let objective = |w: &[f64]| mean_log_likelihood(&model, &train_examples, w) - l2_penalty(l2, w);

    // w = scale · v, so the L2 shrinkage is one multiply per step
    let mut v = model.weights().to_vec();
    let mut scale = 1.0f64;
    let initial_objective = objective(&v);
    let mut grad = GradBuffer::new(v.len(), true);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut since_best = 0;
    let mut batch_order: Vec<usize> = (0..train_examples.len()).collect();

    for epoch in 0..config.epochs {
        let step = config.learning_rate / (1.0 + config.decay * epoch as f64);
        batch_order.shuffle(&mut rng);
        for chunk in batch_order.chunks(config.batch_size) {
            let coef = 1.0 / chunk.len() as f64;
            for &i in chunk {
                accumulate(&model, &train_examples[i], &v, scale, coef, &mut grad)?;
            }
            scale *= 1.0 - step * l2;
            if scale < 1e-9 {
                v.iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
            for &i in &grad.touched {
                v[i] += step * grad.values[i] / scale;
            }
            grad.clear();
        }
        let w: Vec<f64> = v.iter().map(|x| x * scale).collect();
        let obj = objective(&w);
        let heldout = (!heldout_examples.is_empty())
            .then(|| mean_log_likelihood(&model, &heldout_examples, &w));
        log::debug!("epoch {epoch}: objective {obj:.6} heldout {heldout:?}");
        epochs.push(EpochLog {
            epoch,
            step_size: step,
            objective: obj,
            heldout_log_likelihood: heldout,
        });
        let score = heldout.unwrap_or(obj);
        match &best {
            Some((b, _, _)) if score <= *b => since_best += 1,
            _ => {
                best = Some((score, epoch, w));
                since_best = 0;
            }
        }
        if heldout.is_some() && since_best >= config.patience {
            break;
        }
    }

    let (best_epoch, weights) = match best {
        Some((_, e, w)) => (e, w),
        None => (0, v),
    };
    let final_objective = objective(&weights);
    model.set_weights(weights)?;
    model.set_training_summary(TrainingSummary {
        config: config.clone(),
        n_train: train_examples.len(),
        n_heldout: heldout_examples.len(),
        initial_objective,
        final_objective,
        best_epoch,
        epochs,
    });
    Ok(model)
}
