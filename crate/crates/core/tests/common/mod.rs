//! Test-only oracles: exhaustive enumeration over label sequences and
//! central finite differences. Nothing here calls the dynamic programs it checks.
#![allow(dead_code)]

use nerbias::conll::{extract_entities, split_tag, EntitySpan};
use nerbias::crf::train::build_feature_index;
use nerbias::crf::{log_likelihood_and_gradient, CrfModel, FeatureConfig, LabelSet, LabeledSentence};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const LABEL_POOL: [&str; 4] = ["O", "B-PER", "I-PER", "B-LOC"];
const VOCAB: [&str; 8] = ["Jose", "told", "Ana", "that", "Paris", ".", "alya", "won"];

pub fn random_instance(rng: &mut ChaCha8Rng, max_len: usize, max_labels: usize) -> (CrfModel, Vec<String>) {
    let n_labels = rng.gen_range(2..=max_labels);
    let labels = LabelSet::new(LABEL_POOL[..n_labels].iter().copied()).unwrap();
    let len = rng.gen_range(1..=max_len);
    let tokens: Vec<String> = (0..len).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())].to_string()).collect();
    let config = FeatureConfig { window: vec![-1, 0, 1], ..FeatureConfig::default() };
    let sent = LabeledSentence { tokens: tokens.clone(), tags: vec!["O".into(); len] };
    let index = build_feature_index(&[sent], &config, None);
    let mut model = CrfModel::zeros(labels, config, index, 0.0).unwrap();
    let w: Vec<f64> = (0..model.weights().len()).map(|_| rng.gen_range(-1.5..1.5)).collect();
    model.set_weights(w).unwrap();
    (model, tokens)
}

/// Legal IOB2 sequence check from the tag strings alone.
pub fn is_legal(tags: &[&str]) -> bool {
    tags.iter().enumerate().all(|(t, tag)| match split_tag(tag) {
        Some(('I', ty)) => t > 0 && matches!(split_tag(tags[t - 1]), Some((_, p)) if p == ty),
        _ => true,
    })
}

/// Every legal labeling with its unnormalized log score.
pub fn enumerate(model: &CrfModel, tokens: &[String]) -> Vec<(Vec<usize>, f64)> {
    let l = model.n_labels();
    let n = tokens.len();
    let compiled = model.compile(tokens);
    let w = model.weights();
    let mut out = Vec::new();
    let total = l.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let seq: Vec<usize> = (0..n).map(|_| { let y = c % l; c /= l; y }).collect();
        let tags: Vec<&str> = seq.iter().map(|&y| model.label_set().get(y)).collect();
        if !is_legal(&tags) {
            continue;
        }
        let mut s = w[model.start_index(seq[0])];
        for t in 0..n {
            for &(f, v) in &compiled[t] {
                s += v * w[model.emission_index(f, seq[t])];
            }
            if t > 0 {
                s += w[model.transition_index(seq[t - 1], seq[t])];
            }
        }
        out.push((seq, s));
    }
    out
}

pub fn brute_log_partition(model: &CrfModel, tokens: &[String]) -> f64 {
    let paths = enumerate(model, tokens);
    let m = paths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    m + paths.iter().map(|p| (p.1 - m).exp()).sum::<f64>().ln()
}

/// Highest-scoring labeling; first in enumeration order on ties.
pub fn brute_argmax(model: &CrfModel, tokens: &[String]) -> Vec<String> {
    let paths = enumerate(model, tokens);
    let best = paths.iter().fold(None::<&(Vec<usize>, f64)>, |b, p| match b {
        Some(q) if q.1 >= p.1 => b,
        _ => Some(p),
    }).unwrap();
    best.0.iter().map(|&y| model.label_set().get(y).to_string()).collect()
}

/// Total probability of labelings whose entity set contains `span`.
pub fn brute_span_posterior(model: &CrfModel, tokens: &[String], span: &EntitySpan) -> f64 {
    let paths = enumerate(model, tokens);
    let log_z = brute_log_partition(model, tokens);
    paths
        .iter()
        .filter(|(seq, _)| {
            let tags: Vec<&str> = seq.iter().map(|&y| model.label_set().get(y)).collect();
            extract_entities(&tags).contains(span)
        })
        .map(|(_, s)| (s - log_z).exp())
        .sum()
}

/// Central finite-difference gradient of the training objective.
pub fn finite_difference_gradient(model: &CrfModel, batch: &[LabeledSentence], h: f64) -> Vec<f64> {
    let base = model.weights().to_vec();
    let mut probe = model.clone();
    (0..base.len())
        .map(|i| {
            let mut w = base.clone();
            w[i] = base[i] + h;
            probe.set_weights(w.clone()).unwrap();
            let up = log_likelihood_and_gradient(&probe, batch).unwrap().0;
            w[i] = base[i] - h;
            probe.set_weights(w).unwrap();
            let down = log_likelihood_and_gradient(&probe, batch).unwrap().0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// A random gold labeling that is legal under the model's label set.
pub fn random_legal_tags(rng: &mut ChaCha8Rng, model: &CrfModel, len: usize) -> Vec<String> {
    loop {
        let tags: Vec<&str> = (0..len).map(|_| model.label_set().get(rng.gen_range(0..model.n_labels()))).collect();
        if is_legal(&tags) {
            return tags.into_iter().map(String::from).collect();
        }
    }
}

fn labeled(line: &str) -> LabeledSentence {
    let (tokens, tags) = line
        .split_whitespace()
        .map(|pair| {
            let (w, t) = pair.rsplit_once('/').expect("word/TAG");
            (w.to_string(), t.to_string())
        })
        .unzip();
    LabeledSentence { tokens, tags }
}

/// A handful of `word/TAG` sentences with capitalized persons and places.
pub fn toy_corpus() -> Vec<LabeledSentence> {
    [
        "Alya/B-PER told/O Theo/B-PER about/O Paris/B-LOC ./O",
        "Jasmine/B-PER met/O Ryan/B-PER in/O Berlin/B-LOC ./O",
        "the/O meeting/O in/O Madrid/B-LOC was/O long/O ./O",
        "Theo/B-PER said/O that/O Alya/B-PER could/O pay/O ./O",
        "Ryan/B-PER Smith/I-PER visited/O Rome/B-LOC yesterday/O ./O",
        "we/O saw/O Jasmine/B-PER and/O Ryan/B-PER ./O",
        "it/O rained/O in/O Paris/B-LOC ./O",
        "Alya/B-PER and/O Theo/B-PER left/O Berlin/B-LOC ./O",
    ]
    .iter()
    .map(|l| labeled(l))
    .collect()
}

pub fn toy_model() -> CrfModel {
    let config = nerbias::crf::TrainConfig {
        epochs: 15,
        ..Default::default()
    };
    nerbias::crf::train(&config, &toy_corpus(), None).expect("toy training")
}

pub fn toks(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}
