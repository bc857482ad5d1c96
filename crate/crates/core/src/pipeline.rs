//! Corpus files and the streaming tag-and-score loop shared by the CLI and tests.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::backend::{tag_all, Backend};
use crate::conll::{parse_conll, write_conll};
use crate::error::{Error, Result};
use crate::metrics::{score_sentence, FillOutcome};
use crate::templates::{GeneratedSentence, ProvenanceRecord};

/// `corpus.conll` → `corpus.provenance.jsonl`.
pub fn sidecar_path(conll: &Path) -> PathBuf {
    conll.with_extension("provenance.jsonl")
}

/// Streams sentences into a CoNLL file and its provenance sidecar.
pub struct CorpusWriter {
    conll: BufWriter<File>,
    sidecar: BufWriter<File>,
    path: PathBuf,
    count: u64,
}

impl CorpusWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::from(e).in_file(parent))?;
        }
        let open = |p: &Path| {
            File::create(p)
                .map(BufWriter::new)
                .map_err(|e| Error::from(e).in_file(p))
        };
        Ok(CorpusWriter {
            conll: open(path)?,
            sidecar: open(&sidecar_path(path))?,
            path: path.to_path_buf(),
            count: 0,
        })
    }

    pub fn write(&mut self, s: &GeneratedSentence) -> Result<()> {
        let io = |e: std::io::Error| Error::from(e).in_file(&self.path);
        self.conll
            .write_all(write_conll(std::slice::from_ref(&s.to_conll())).as_bytes())
            .map_err(io)?;
        let record = serde_json::to_string(&ProvenanceRecord::from(&s.provenance))?;
        writeln!(self.sidecar, "{record}").map_err(io)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.conll.flush().map_err(|e| Error::from(e).in_file(&self.path))?;
        self.sidecar.flush().map_err(|e| Error::from(e).in_file(&self.path))?;
        Ok(self.count)
    }
}

/// Reads a generated corpus back from its CoNLL file and sidecar.
pub fn read_corpus(path: &Path) -> Result<Vec<GeneratedSentence>> {
    let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    let sentences = parse_conll(BufReader::new(file)).map_err(|e| e.in_file(path))?;
    let side = sidecar_path(path);
    let file = File::open(&side).map_err(|e| Error::from(e).in_file(&side))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::from(e).in_file(&side))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ProvenanceRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(i + 1, e.to_string()).in_file(&side))?;
        records.push(r);
    }
    if records.len() != sentences.len() {
        return Err(Error::validation(format!(
            "{} sentences but {} provenance records",
            sentences.len(),
            records.len()
        ))
        .in_file(&side));
    }
    sentences
        .iter()
        .zip(&records)
        .enumerate()
        .map(|(i, (s, r))| {
            GeneratedSentence::from_parts(s, r)
                .map_err(|e| Error::validation(format!("sentence {}: {e}", i + 1)).in_file(path))
        })
        .collect()
}

/// Tags `sentences` and scores every fill, holding at most `chunk` sentences
/// in memory at once. Outcomes follow input order.
pub fn tag_and_score<I>(
    backends: &mut [Box<dyn Backend>],
    sentences: I,
    batch_size: usize,
    chunk: usize,
) -> Result<Vec<FillOutcome>>
where
    I: IntoIterator<Item = GeneratedSentence>,
{
    let chunk = chunk.max(batch_size).max(1);
    let mut out = Vec::new();
    let mut buf: Vec<GeneratedSentence> = Vec::with_capacity(chunk);
    let mut flush = |buf: &mut Vec<GeneratedSentence>, out: &mut Vec<FillOutcome>| -> Result<()> {
        let tokens: Vec<Vec<String>> = buf.iter().map(|s| s.tokens.clone()).collect();
        let responses = tag_all(backends, &tokens, batch_size)?;
        for (resp, s) in responses.iter().zip(buf.iter()) {
            out.extend(score_sentence(resp, s)?);
        }
        buf.clear();
        Ok(())
    };
    for s in sentences {
        buf.push(s);
        if buf.len() == chunk {
            flush(&mut buf, &mut out)?;
        }
    }
    if !buf.is_empty() {
        flush(&mut buf, &mut out)?;
    }
    Ok(out)
}
