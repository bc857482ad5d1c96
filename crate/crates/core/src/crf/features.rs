//! Token features for the built-in tagger.
//!
//! Lexical features are binary indicators named by string; embedding
//! features are real-valued, one per vector component of the current token.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    /// File the vectors were loaded from, recorded so a saved model can reload them.
    pub path: Option<PathBuf>,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Neighbor offsets whose context features are included; 0 is the token itself.
    pub window: Vec<i32>,
    pub lexical: bool,
    pub embeddings: Option<EmbeddingSource>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: vec![-2, -1, 0, 1, 2],
            lexical: true,
            embeddings: None,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lexical && self.embeddings.is_none() {
            return Err(Error::validation("at least one feature family must be enabled"));
        }
        if self.window.iter().any(|o| o.unsigned_abs() > 16) {
            return Err(Error::validation("window offsets must lie within ±16"));
        }
        if matches!(&self.embeddings, Some(e) if e.dimension == 0) {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        Ok(())
    }
}

/// `Alya` → `Xxxx`, `B-52` → `X-dd`.
pub fn word_shape(word: &str) -> String {
    word.chars()
        .map(|c| {
            if c.is_uppercase() {
                'X'
            } else if c.is_lowercase() {
                'x'
            } else if c.is_numeric() {
                'd'
            } else {
                c
            }
        })
        .collect()
}

/// Shape with runs collapsed: `Xxxx` → `Xx`.
pub fn short_shape(word: &str) -> String {
    let mut out = String::new();
    for c in word_shape(word).chars() {
        if !out.ends_with(c) {
            out.push(c);
        }
    }
    out
}

fn affixes(lower: &str, out: &mut Vec<(String, f64)>) {
    let chars: Vec<char> = lower.chars().collect();
    for n in 1..=4.min(chars.len()) {
        let p: String = chars[..n].iter().collect();
        let s: String = chars[chars.len() - n..].iter().collect();
        out.push((format!("pre{n}={p}"), 1.0));
        out.push((format!("suf{n}={s}"), 1.0));
    }
}

pub const EMBEDDING_PREFIX: &str = "emb:";

/// Named features of `tokens[position]`.
pub fn featurize(
    tokens: &[String],
    position: usize,
    config: &FeatureConfig,
    store: Option<&EmbeddingStore>,
) -> Vec<(String, f64)> {
    let mut out = vec![("bias".to_string(), 1.0)];
    let word = tokens[position].as_str();
    if config.lexical {
        let lower = word.to_lowercase();
        out.push((format!("w={word}"), 1.0));
        out.push((format!("lw={lower}"), 1.0));
        affixes(&lower, &mut out);
        out.push((format!("shape={}", word_shape(word)), 1.0));
        out.push((format!("sshape={}", short_shape(word)), 1.0));
        if word.chars().next().is_some_and(char::is_uppercase) {
            out.push(("initcap".to_string(), 1.0));
        }
        if word.chars().any(char::is_alphabetic) && !word.chars().any(char::is_lowercase) {
            out.push(("allcaps".to_string(), 1.0));
        }
        if word.chars().any(|c| c.is_ascii_digit()) {
            out.push(("digit".to_string(), 1.0));
        }
        for &off in config.window.iter().filter(|&&o| o != 0) {
            let j = position as i64 + off as i64;
            if j < 0 {
                out.push((format!("[{off}]BOS"), 1.0));
            } else if j as usize >= tokens.len() {
                out.push((format!("[{off}]EOS"), 1.0));
            } else {
                let w = tokens[j as usize].as_str();
                out.push((format!("[{off}]lw={}", w.to_lowercase()), 1.0));
                out.push((format!("[{off}]sshape={}", short_shape(w)), 1.0));
                if w.chars().next().is_some_and(char::is_uppercase) {
                    out.push((format!("[{off}]initcap"), 1.0));
                }
            }
        }
    }
    if let Some(src) = &config.embeddings {
        match store {
            Some(store) => {
                let hit = store.lookup(word);
                for (k, v) in hit.vector.iter().enumerate() {
                    out.push((format!("{EMBEDDING_PREFIX}{k}"), f64::from(*v)));
                }
            }
            None => {
                for k in 0..src.dimension {
                    out.push((format!("{EMBEDDING_PREFIX}{k}"), 0.0));
                }
            }
        }
    }
    out
}

/// Dense ids for feature names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureIndex {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl FeatureIndex {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if ids.insert(n.clone(), i as u32).is_some() {
                return Err(Error::validation(format!("duplicate feature name {n:?}")));
            }
        }
        Ok(FeatureIndex { names, ids })
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Sparse `(feature id, value)` lists, one per token.
pub type CompiledSentence = Vec<Vec<(u32, f64)>>;
