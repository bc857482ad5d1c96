//! Word vectors in the GloVe / word2vec text layout.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{deaccent, DemographicCategory, NameRegistry};

/// Which fallback step resolved a lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LookupStep {
    Exact,
    Deaccented,
    Lowercased,
    Oov,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupResult<'a> {
    pub vector: &'a [f32],
    /// The key that matched; empty for OOV.
    pub matched_form: String,
    pub step: LookupStep,
    pub is_oov: bool,
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dimension: usize,
    table: HashMap<String, Vec<f32>>,
    oov: Vec<f32>,
    duplicates: usize,
}

impl EmbeddingStore {
    pub fn from_entries<I>(dimension: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f32>)>,
    {
        if dimension == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        let mut store = EmbeddingStore {
            dimension,
            table: HashMap::new(),
            oov: vec![0.0; dimension],
            duplicates: 0,
        };
        for (word, v) in entries {
            if v.len() != dimension || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("bad vector for {word:?}")));
            }
            if store.table.insert(word, v).is_some() {
                store.duplicates += 1;
            }
        }
        Ok(store)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Number of lines whose word had already been seen (later one kept).
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn contains(&self, word: &str) -> bool {
        self.table.contains_key(word)
    }

    /// Exact form, then deaccented, then lowercased; all-zero vector otherwise.
    pub fn lookup(&self, token: &str) -> LookupResult<'_> {
        let hit = |key: String, step| {
            self.table.get(&key).map(|v| LookupResult {
                vector: v.as_slice(),
                matched_form: key,
                step,
                is_oov: false,
            })
        };
        let plain = deaccent(token);
        hit(token.to_string(), LookupStep::Exact)
            .or_else(|| hit(plain.clone(), LookupStep::Deaccented))
            .or_else(|| hit(token.to_lowercase(), LookupStep::Lowercased))
            .or_else(|| hit(plain.to_lowercase(), LookupStep::Lowercased))
            .unwrap_or(LookupResult {
                vector: &self.oov,
                matched_form: String::new(),
                step: LookupStep::Oov,
                is_oov: true,
            })
    }

    /// Registry names (baseline excluded) that no fallback step resolves.
    pub fn oov_report(&self, registry: &NameRegistry) -> Vec<(String, DemographicCategory)> {
        registry
            .entries()
            .iter()
            .filter(|e| self.lookup(&e.surface).is_oov)
            .map(|e| (e.surface.clone(), e.category))
            .collect()
    }
}

/// Streams a text vector file: `word c1 c2 ...` per line. A leading
/// `count dimension` header line is accepted and checked.
pub fn load_text_vectors<R: BufRead>(
    stream: R,
    expected_dimension: Option<usize>,
) -> Result<EmbeddingStore> {
    let mut dimension = expected_dimension;
    let mut table: HashMap<String, Vec<f32>> = HashMap::new();
    let mut duplicates = 0;
    for (idx, line) in stream.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split([' ', '\t']).filter(|f| !f.is_empty());
        let word = fields.next().expect("nonblank line has a field");
        let rest: Vec<&str> = fields.collect();
        if idx == 0 && rest.len() == 1 {
            if let (Ok(_), Ok(dim)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                match dimension {
                    Some(d) if d != dim => {
                        return Err(Error::parse(
                            lineno,
                            format!("header declares dimension {dim}, expected {d}"),
                        ))
                    }
                    _ => dimension = Some(dim),
                }
                continue;
            }
        }
        let vector = rest
            .iter()
            .map(|f| {
                f.parse::<f32>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(lineno, format!("non-numeric component {f:?}")))
            })
            .collect::<Result<Vec<f32>>>()?;
        match dimension {
            Some(d) if d != vector.len() => {
                return Err(Error::parse(
                    lineno,
                    format!("expected {d} components, found {}", vector.len()),
                ))
            }
            None => dimension = Some(vector.len()),
            _ => {}
        }
        if vector.is_empty() {
            return Err(Error::parse(lineno, "word has no components"));
        }
        if table.insert(word.to_string(), vector).is_some() {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate vocabulary entries overwritten");
    }
    let dimension = dimension.ok_or_else(|| Error::validation("vector file is empty"))?;
    Ok(EmbeddingStore {
        dimension,
        table,
        oov: vec![0.0; dimension],
        duplicates,
    })
}
