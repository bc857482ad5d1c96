//! Tagging backends: the built-in CRF and external processes speaking the
//! JSON-lines protocol over stdio or TCP.

mod builtin;
mod conformance;
mod external;
pub mod protocol;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtin::BuiltinBackend;
pub use conformance::{check_conformance, random_requests, ConformanceReport};
pub use external::ExternalBackend;
pub use protocol::{
    serve, AliasTable, Capabilities, EchoTagger, RuleBasedTagger, TagRequest, TagResponse, Tagger,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BackendKind {
    BuiltinCrf,
    ExternalProcess,
    ExternalTcp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    /// Model path, shell command line, or `host:port`.
    pub locator: String,
    pub batch_size: usize,
    #[serde(with = "millis")]
    pub timeout: Duration,
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

impl BackendDescriptor {
    pub fn new(kind: BackendKind, locator: impl Into<String>) -> Self {
        BackendDescriptor {
            kind,
            locator: locator.into(),
            batch_size: DEFAULT_BATCH_SIZE,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        if self.timeout.is_zero() {
            return Err(Error::validation("timeout must be positive"));
        }
        if self.locator.trim().is_empty() {
            return Err(Error::validation("backend locator is empty"));
        }
        if self.kind == BackendKind::ExternalTcp && !self.locator.contains(':') {
            return Err(Error::validation(format!(
                "TCP backend needs host:port, got {:?}",
                self.locator
            )));
        }
        Ok(())
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl FromStr for BackendDescriptor {
    type Err = Error;

    /// `builtin:<model>`, `proc:<command line>` or `tcp:<host:port>`.
    fn from_str(s: &str) -> Result<Self> {
        let (scheme, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::validation(format!("backend {s:?} lacks a scheme prefix")))?;
        let kind = match scheme {
            "builtin" => BackendKind::BuiltinCrf,
            "proc" => BackendKind::ExternalProcess,
            "tcp" => BackendKind::ExternalTcp,
            other => return Err(Error::validation(format!("unknown backend scheme {other:?}"))),
        };
        let d = BackendDescriptor::new(kind, rest);
        d.validate()?;
        Ok(d)
    }
}

impl fmt::Display for BackendDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scheme = match self.kind {
            BackendKind::BuiltinCrf => "builtin",
            BackendKind::ExternalProcess => "proc",
            BackendKind::ExternalTcp => "tcp",
        };
        write!(f, "{scheme}:{}", self.locator)
    }
}

pub trait Backend: Send {
    /// Capability record, fetched once and cached.
    fn capabilities(&mut self) -> Result<Capabilities>;

    /// Tags one batch. Responses come back in request order with ids
    /// unique for the lifetime of the backend.
    fn tag_batch(&mut self, sentences: &[Vec<String>]) -> Result<Vec<TagResponse>>;
}

pub fn open(descriptor: &BackendDescriptor) -> Result<Box<dyn Backend>> {
    descriptor.validate()?;
    Ok(match descriptor.kind {
        BackendKind::BuiltinCrf => Box::new(BuiltinBackend::load(descriptor)?),
        BackendKind::ExternalProcess | BackendKind::ExternalTcp => {
            Box::new(ExternalBackend::connect(descriptor)?)
        }
    })
}

/// Tags `sentences` in batches of `batch_size`, spreading batches across the
/// given connections. Output order matches input order.
pub fn tag_all(
    backends: &mut [Box<dyn Backend>],
    sentences: &[Vec<String>],
    batch_size: usize,
) -> Result<Vec<TagResponse>> {
    if backends.is_empty() {
        return Err(Error::validation("no backend connections"));
    }
    let batch_size = batch_size.max(1);
    let batches: Vec<&[Vec<String>]> = sentences.chunks(batch_size).collect();
    if backends.len() == 1 {
        let mut out = Vec::with_capacity(sentences.len());
        for b in batches {
            out.extend(backends[0].tag_batch(b)?);
        }
        return Ok(out);
    }
    let n = backends.len();
    let results: Vec<Result<Vec<(usize, Vec<TagResponse>)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = backends
            .iter_mut()
            .enumerate()
            .map(|(w, backend)| {
                let batches = &batches;
                scope.spawn(move || {
                    let mut mine = Vec::new();
                    for (i, b) in batches.iter().enumerate().skip(w).step_by(n) {
                        mine.push((i, backend.tag_batch(b)?));
                    }
                    Ok(mine)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tagging worker panicked"))
            .collect()
    });
    let mut slots: Vec<Option<Vec<TagResponse>>> = vec![None; batches.len()];
    for r in results {
        for (i, resp) in r? {
            slots[i] = Some(resp);
        }
    }
    Ok(slots.into_iter().flatten().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_parsing() {
        let d: BackendDescriptor = "builtin:model.json".parse().unwrap();
        assert_eq!(d.kind, BackendKind::BuiltinCrf);
        assert_eq!(d.locator, "model.json");
        let d: BackendDescriptor = "proc:python3 shim.py --pipeline rulebased".parse().unwrap();
        assert_eq!(d.kind, BackendKind::ExternalProcess);
        assert_eq!(d.to_string(), "proc:python3 shim.py --pipeline rulebased");
        let d: BackendDescriptor = "tcp:127.0.0.1:9000".parse().unwrap();
        assert_eq!(d.locator, "127.0.0.1:9000");
        assert!("tcp:localhost".parse::<BackendDescriptor>().is_err());
        assert!("ftp:x".parse::<BackendDescriptor>().is_err());
        assert!("model.json".parse::<BackendDescriptor>().is_err());
        assert!("proc:".parse::<BackendDescriptor>().is_err());
        let bad = BackendDescriptor::new(BackendKind::BuiltinCrf, "m").with_batch_size(0);
        assert!(bad.validate().is_err());
        let bad = BackendDescriptor::new(BackendKind::BuiltinCrf, "m").with_timeout(Duration::ZERO);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn descriptor_json() {
        let d = BackendDescriptor::new(BackendKind::ExternalTcp, "h:1")
            .with_timeout(Duration::from_millis(1500));
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(
            s,
            r#"{"kind":"EXTERNAL_TCP","locator":"h:1","batch_size":32,"timeout":1500}"#
        );
        assert_eq!(serde_json::from_str::<BackendDescriptor>(&s).unwrap(), d);
    }
}
