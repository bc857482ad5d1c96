use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Backend;
use crate::conll::{extract_entities, split_tag};
use crate::error::Result;

const VOCAB: &[&str] = &[
    "Alya", "Theo", "Jasmine", "Nishelle", "Zikri", "Paris", "Acme", "told", "the", "that", "could",
    "pay", "with", "cash", "he", "she", "met", "in", "Monday", ",", ".", "'s", "O'Neill", "Ümit",
    "naïve", "2024", "B-52", "\"quoted\"", "é", "x",
];

/// Deterministic pseudo-random token lists of 1 to 24 tokens.
pub fn random_requests(seed: u64, count: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.gen_range(1..=24);
            (0..len)
                .map(|_| VOCAB.choose(&mut rng).expect("nonempty").to_string())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub requests: usize,
    pub responses: usize,
    pub entities_on_lowercase: usize,
    pub violations: Vec<String>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.requests == self.responses
    }
}

fn iob2_violation(tags: &[String]) -> Option<String> {
    let mut prev: Option<&str> = None;
    for (i, tag) in tags.iter().enumerate() {
        if tag != "O" {
            match split_tag(tag) {
                Some(('I', ty)) => {
                    let continues = prev
                        .and_then(split_tag)
                        .is_some_and(|(_, p)| p == ty);
                    if !continues {
                        return Some(format!("tag {i} {tag:?} does not continue an entity"));
                    }
                }
                Some(('B', _)) => {}
                _ => return Some(format!("tag {i} {tag:?} is not IOB2")),
            }
        }
        prev = Some(tag);
    }
    None
}

/// Sends `count` random requests in batches of varying size, then the same
/// requests lower-cased, and checks ids, lengths and tag legality.
pub fn check_conformance(
    backend: &mut dyn Backend,
    count: usize,
    seed: u64,
) -> Result<ConformanceReport> {
    let requests = random_requests(seed, count);
    let mut report = ConformanceReport {
        requests: count,
        ..Default::default()
    };
    backend.capabilities()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut start = 0;
    while start < requests.len() {
        let size = rng.gen_range(1..=64).min(requests.len() - start);
        let batch = &requests[start..start + size];
        match backend.tag_batch(batch) {
            Ok(responses) => {
                if responses.len() != batch.len() {
                    report.violations.push(format!(
                        "batch at {start}: {} responses for {} requests",
                        responses.len(),
                        batch.len()
                    ));
                }
                for (i, (req, resp)) in batch.iter().zip(&responses).enumerate() {
                    report.responses += 1;
                    if let Some(prev) = responses[..i].iter().find(|r| r.id == resp.id) {
                        report.violations.push(format!("duplicate id {}", prev.id));
                    }
                    if resp.tags.len() != req.len() {
                        report.violations.push(format!("id {}: wrong length", resp.id));
                    }
                    if let Some(v) = iob2_violation(&resp.tags) {
                        report.violations.push(format!("id {}: {v}", resp.id));
                    }
                }
            }
            Err(e) => report.violations.push(format!("batch at {start}: {e}")),
        }
        start += size;
    }
    let lowered: Vec<Vec<String>> = requests
        .iter()
        .map(|r| r.iter().map(|t| t.to_lowercase()).collect())
        .collect();
    for batch in lowered.chunks(64) {
        match backend.tag_batch(batch) {
            Ok(responses) => {
                report.entities_on_lowercase += responses
                    .iter()
                    .map(|r| extract_entities(&r.tags).len())
                    .sum::<usize>();
            }
            Err(e) => report.violations.push(format!("lower-cased batch: {e}")),
        }
    }
    Ok(report)
}
