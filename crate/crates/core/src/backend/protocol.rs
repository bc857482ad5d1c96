//! Line-delimited JSON wire protocol spoken with external taggers.
//!
//! ```text
//! → {"id":0,"tokens":["Alya","told","Jasmine"]}
//! ← {"id":0,"tags":["B-PER","O","B-PER"],"confidences":[0.93,0.88]}
//! → {"op":"capabilities"}
//! ← {"has_confidence":false,"labels":["PER","LOC"]}
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::conll::{extract_entities, split_tag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRequest {
    pub id: u64,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagResponse {
    pub id: u64,
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidences: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub has_confidence: bool,
    pub labels: Vec<String>,
}

pub const CAPABILITIES_REQUEST: &str = r#"{"op":"capabilities"}"#;

/// Maps backend entity labels onto PER, LOC, ORG, MISC or OTHER.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasTable {
    map: BTreeMap<String, String>,
}

impl Default for AliasTable {
    fn default() -> Self {
        let pairs = [
            ("PER", "PER"),
            ("PERSON", "PER"),
            ("LOC", "LOC"),
            ("LOCATION", "LOC"),
            ("GPE", "LOC"),
            ("ORG", "ORG"),
            ("ORGANIZATION", "ORG"),
            ("MISC", "MISC"),
        ];
        AliasTable {
            map: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }
}

impl AliasTable {
    pub fn insert(&mut self, from: impl Into<String>, to: impl Into<String>) {
        self.map.insert(from.into(), to.into());
    }

    pub fn canonical<'a>(&'a self, label: &str) -> &'a str {
        self.map.get(label).map(String::as_str).unwrap_or("OTHER")
    }

    /// `B-PERSON` → `B-PER`. Returns `None` for malformed tags.
    pub fn normalize_tag(&self, tag: &str) -> Option<String> {
        if tag == "O" {
            return Some("O".to_string());
        }
        let (prefix, ty) = split_tag(tag)?;
        Some(format!("{prefix}-{}", self.canonical(ty)))
    }
}

/// Decodes one response line, mapping labels and validating it against the
/// request's token count.
pub fn parse_response(line: &str, aliases: &AliasTable) -> Result<TagResponse> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| Error::protocol(None, format!("malformed JSON ({e}): {line}")))?;
    let id = value.get("id").and_then(Value::as_u64);
    if let Some(err) = value.get("error") {
        return Err(Error::protocol(id, format!("backend reported error: {err}")));
    }
    let mut resp: TagResponse = serde_json::from_value(value)
        .map_err(|e| Error::protocol(id, format!("bad response ({e}): {line}")))?;
    for tag in resp.tags.iter_mut() {
        *tag = aliases
            .normalize_tag(tag)
            .ok_or_else(|| Error::protocol(id, format!("invalid tag {tag:?}")))?;
    }
    Ok(resp)
}

pub fn validate_response(resp: &TagResponse, n_tokens: usize) -> Result<()> {
    if resp.tags.len() != n_tokens {
        return Err(Error::protocol(
            Some(resp.id),
            format!("{} tags for {n_tokens} tokens", resp.tags.len()),
        ));
    }
    if let Some(conf) = &resp.confidences {
        let n_entities = extract_entities(&resp.tags).len();
        if conf.len() != n_entities {
            return Err(Error::protocol(
                Some(resp.id),
                format!("{} confidences for {n_entities} entities", conf.len()),
            ));
        }
        if conf.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::protocol(Some(resp.id), "confidence outside [0, 1]"));
        }
    }
    Ok(())
}

/// A tagging function: tokens in, IOB2 tags and optional per-entity confidences out.
pub trait Tagger {
    fn capabilities(&self) -> Capabilities;
    fn tag(&self, tokens: &[String]) -> (Vec<String>, Option<Vec<f64>>);
}

/// Tags capitalized tokens as single-token persons, except a small set of
/// function words. Fully lower-cased text yields no entities.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedTagger;

const STOPWORDS: &[&str] = &[
    "The", "A", "An", "He", "She", "It", "They", "We", "I", "You", "This", "That", "In", "On",
    "At", "And", "But", "If", "When", "After", "Before", "Well",
];

impl Tagger for RuleBasedTagger {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_confidence: false,
            labels: vec!["PER".to_string()],
        }
    }

    fn tag(&self, tokens: &[String]) -> (Vec<String>, Option<Vec<f64>>) {
        let tags = tokens
            .iter()
            .map(|t| {
                let cap = t.chars().next().is_some_and(char::is_uppercase);
                if cap && !STOPWORDS.contains(&t.as_str()) {
                    "B-PER".to_string()
                } else {
                    "O".to_string()
                }
            })
            .collect();
        (tags, None)
    }
}

/// Tags everything `O`.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoTagger;

impl Tagger for EchoTagger {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_confidence: false,
            labels: Vec::new(),
        }
    }

    fn tag(&self, tokens: &[String]) -> (Vec<String>, Option<Vec<f64>>) {
        (vec!["O".to_string(); tokens.len()], None)
    }
}

/// Answers protocol requests from `input` until end of stream. Malformed
/// requests get an `{"id":..,"error":..}` line and the loop continues.
pub fn serve<R: BufRead, W: Write>(tagger: &dyn Tagger, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Value>(&line) {
            Ok(v) if v.get("op").and_then(Value::as_str) == Some("capabilities") => {
                serde_json::to_string(&tagger.capabilities())?
            }
            Ok(v) => match serde_json::from_value::<TagRequest>(v.clone()) {
                Ok(req) => {
                    let (tags, confidences) = tagger.tag(&req.tokens);
                    serde_json::to_string(&TagResponse {
                        id: req.id,
                        tags,
                        confidences,
                    })?
                }
                Err(e) => error_line(v.get("id").cloned(), &e.to_string()),
            },
            Err(e) => error_line(None, &e.to_string()),
        };
        output.write_all(reply.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

fn error_line(id: Option<Value>, message: &str) -> String {
    serde_json::json!({"id": id.unwrap_or(Value::Null), "error": message}).to_string()
}
