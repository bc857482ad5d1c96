use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::conll::{is_valid_tag, split_tag};
use crate::error::{Error, Result};

/// Ordered IOB2 tag inventory. Order matters: it is the Viterbi tie-break order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !is_valid_tag(l) {
                return Err(Error::validation(format!("invalid tag {l:?} in label set")));
            }
            if !seen.insert(l.as_str()) {
                return Err(Error::validation(format!("duplicate label {l:?}")));
            }
        }
        if !seen.contains("O") || !seen.contains("B-PER") {
            return Err(Error::validation("label set must contain O and B-PER"));
        }
        Ok(LabelSet { labels })
    }

    /// `O`, then `B-X`, `I-X` for every type seen, types sorted. PER is always included.
    pub fn from_tags<'a>(tags: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut types: BTreeSet<String> = BTreeSet::new();
        types.insert("PER".to_string());
        for t in tags {
            if t == "O" {
                continue;
            }
            let (_, ty) =
                split_tag(t).ok_or_else(|| Error::validation(format!("invalid tag {t:?}")))?;
            types.insert(ty.to_string());
        }
        let mut labels = vec!["O".to_string()];
        for ty in types {
            labels.push(format!("B-{ty}"));
            labels.push(format!("I-{ty}"));
        }
        LabelSet::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == tag)
    }

    /// `I-X` may only follow `B-X` or `I-X`.
    pub fn transition_allowed(&self, from: usize, to: usize) -> bool {
        match split_tag(&self.labels[to]) {
            Some(('I', ty)) => matches!(split_tag(&self.labels[from]), Some((_, t)) if t == ty),
            _ => true,
        }
    }

    pub fn start_allowed(&self, label: usize) -> bool {
        !matches!(split_tag(&self.labels[label]), Some(('I', _)))
    }

    /// Entity types that can begin a mention.
    pub fn entity_types(&self) -> Vec<&str> {
        self.labels
            .iter()
            .filter_map(|l| match split_tag(l) {
                Some(('B', ty)) => Some(ty),
                _ => None,
            })
            .collect()
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.labels
    }
}
