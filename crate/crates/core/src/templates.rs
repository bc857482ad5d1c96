//! Synthetic evaluation corpora.
//!
//! Two generators fill person slots with registry names:
//!
//! * template expansion: every ordered tuple of distinct names is placed
//!   into the slots of each template, enumerated template-major and then in
//!   lexicographic order of registry indices, so any index range of the
//!   enumeration can be produced independently;
//! * in-situ substitution: real sentences holding exactly one single-token
//!   PER entity get that token replaced by each name in turn.

use std::collections::HashSet;
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conll::{extract_entities, ConllSentence, EntitySpan, Token, PER};
use crate::error::{Error, Result};
use crate::registry::{DemographicCategory, NameEntry, NameRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Dataset {
    Winogender,
    Insitu,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Winogender => "winogender",
            Dataset::Insitu => "insitu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseVariant {
    Original,
    Lower,
}

impl CaseVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseVariant::Original => "original",
            CaseVariant::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TemplatePart {
    Literal(String),
    Slot(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub parts: Vec<TemplatePart>,
    /// Token position of each slot, indexed by slot number.
    slot_positions: Vec<usize>,
}

impl Template {
    pub fn slot_count(&self) -> usize {
        self.slot_positions.len()
    }

    pub fn slot_positions(&self) -> &[usize] {
        &self.slot_positions
    }

    /// Parses one template line, e.g. `{0} told {1} that {2} could pay with cash.`
    pub fn parse(id: impl Into<String>, line: &str) -> Result<Template> {
        let mut parts = Vec::new();
        for chunk in line.split_whitespace() {
            for piece in split_trailing_punct(chunk) {
                parts.push(parse_piece(piece)?);
            }
        }
        let mut slot_positions: Vec<Option<usize>> = Vec::new();
        for (pos, part) in parts.iter().enumerate() {
            if let TemplatePart::Slot(k) = part {
                if *k >= slot_positions.len() {
                    slot_positions.resize(k + 1, None);
                }
                if slot_positions[*k].replace(pos).is_some() {
                    return Err(Error::validation(format!("slot {{{k}}} appears twice")));
                }
            }
        }
        let slot_positions = slot_positions
            .into_iter()
            .enumerate()
            .map(|(k, p)| p.ok_or_else(|| Error::validation(format!("slot {{{k}}} is missing"))))
            .collect::<Result<Vec<_>>>()?;
        if parts.is_empty() {
            return Err(Error::validation("empty template"));
        }
        Ok(Template {
            id: id.into(),
            parts,
            slot_positions,
        })
    }

    /// Tokens with each slot filled by the given surfaces (indexed by slot).
    pub fn instantiate(&self, fills: &[&str]) -> Vec<String> {
        self.parts
            .iter()
            .map(|p| match p {
                TemplatePart::Literal(s) => s.clone(),
                TemplatePart::Slot(k) => fills[*k].to_string(),
            })
            .collect()
    }

    pub fn to_line(&self) -> String {
        let toks: Vec<String> = self
            .parts
            .iter()
            .map(|p| match p {
                TemplatePart::Literal(s) => s.clone(),
                TemplatePart::Slot(k) => format!("{{{k}}}"),
            })
            .collect();
        toks.join(" ")
    }
}

const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?'];

/// `cash.` → [`cash`, `.`]; `{1},` → [`{1}`, `,`]. Runs such as `...` stay whole.
fn split_trailing_punct(chunk: &str) -> Vec<&str> {
    let body = chunk.trim_end_matches(TRAILING_PUNCT);
    if body.is_empty() || body.len() == chunk.len() {
        return vec![chunk];
    }
    let tail = &chunk[body.len()..];
    if tail.chars().all(|c| c == '.') && tail.len() > 1 {
        return vec![body, tail];
    }
    let mut out = vec![body];
    let mut idx = body.len();
    for c in tail.chars() {
        out.push(&chunk[idx..idx + c.len_utf8()]);
        idx += c.len_utf8();
    }
    out
}

fn parse_piece(piece: &str) -> Result<TemplatePart> {
    if !piece.contains(['{', '}']) {
        return Ok(TemplatePart::Literal(piece.to_string()));
    }
    let inner = piece
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
        .ok_or_else(|| Error::validation(format!("malformed slot {piece:?}")))?;
    inner
        .parse()
        .map(TemplatePart::Slot)
        .map_err(|_| Error::validation(format!("malformed slot {piece:?}")))
}

/// Validation applied to template files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemplateRules {
    pub min_slots: usize,
    /// Reject templates with the literal `the` right before a slot.
    pub forbid_article_before_slot: bool,
}

impl TemplateRules {
    pub const WINOGENDER: TemplateRules = TemplateRules {
        min_slots: 3,
        forbid_article_before_slot: true,
    };

    pub const LENIENT: TemplateRules = TemplateRules {
        min_slots: 1,
        forbid_article_before_slot: false,
    };

    fn check(&self, t: &Template) -> Result<()> {
        if t.slot_count() < self.min_slots {
            return Err(Error::validation(format!(
                "template has {} slots, at least {} required",
                t.slot_count(),
                self.min_slots
            )));
        }
        if self.forbid_article_before_slot {
            for &pos in t.slot_positions() {
                if pos > 0 {
                    if let TemplatePart::Literal(w) = &t.parts[pos - 1] {
                        if w.eq_ignore_ascii_case("the") {
                            return Err(Error::validation("`the` directly precedes a slot"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl Default for TemplateRules {
    fn default() -> Self {
        TemplateRules::WINOGENDER
    }
}

/// One template per line, `#` comments and blank lines skipped. Template ids
/// are their zero-based order in the file.
pub fn load_templates<R: BufRead>(source: R, rules: TemplateRules) -> Result<Vec<Template>> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let t = Template::parse(out.len().to_string(), trimmed)
            .and_then(|t| rules.check(&t).map(|_| t))
            .map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        out.push(t);
    }
    Ok(out)
}

const BUILTIN_TEMPLATES: &str = "\
{0} told {1} that {2} could pay with cash.
{0} asked {1} whether {2} had signed the lease.
{0} explained to {1} that {2} would need a second opinion.
{0} and {1} waited while {2} finished the inspection.
{0} called {1} because {2} had missed the appointment.
{0} introduced {1} to {2} after the meeting.
{0} reminded {1} that {2} was running late.
{0} helped {1} because {2} was too busy to answer.
{0} warned {1} that {2} had already left the building.
{0} thanked {1} and {2} for their patience.
{0} gave {1} the report that {2} had written.
{0} told {1} that {2} would be promoted next year.
";

/// A small built-in three-slot template set.
pub fn builtin_templates() -> Vec<Template> {
    load_templates(BUILTIN_TEMPLATES.as_bytes(), TemplateRules::WINOGENDER)
        .expect("built-in templates are valid")
}

/// Hex SHA-256 over the normalized template lines.
pub fn templates_digest(templates: &[Template]) -> String {
    let mut h = Sha256::new();
    for t in templates {
        h.update(t.to_line().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// n·(n−1)·…·(n−k+1)
fn falling_factorial(n: u64, k: usize) -> Option<u64> {
    (0..k as u64).try_fold(1u64, |acc, i| acc.checked_mul(n.checked_sub(i)?))
}

/// Number of sentences produced by exhaustive expansion.
pub fn expansion_count(n_names: usize, templates: &[Template]) -> Result<u64> {
    templates.iter().try_fold(0u64, |acc, t| {
        let k = t.slot_count();
        if n_names < k {
            return Err(Error::validation(format!(
                "{n_names} names cannot fill template {} with {k} slots",
                t.id
            )));
        }
        falling_factorial(n_names as u64, k)
            .and_then(|c| acc.checked_add(c))
            .ok_or_else(|| Error::validation("expansion count overflows u64"))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fill {
    pub slot: usize,
    /// Token index of the filled name within the sentence.
    pub position: usize,
    pub entry: NameEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: Dataset,
    pub source_id: String,
    pub fills: Vec<Fill>,
    pub case_variant: CaseVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GeneratedSentence {
    pub tokens: Vec<String>,
    /// Full gold IOB2 tags, including non-PER entities kept from in-situ sources.
    pub tags: Vec<String>,
    /// Opaque CoNLL middle columns, when the source carried them.
    pub annotations: Option<Vec<Vec<String>>>,
    /// Unigram PER spans at the filled positions, ordered by slot.
    pub gold_spans: Vec<EntitySpan>,
    pub provenance: Provenance,
}

impl GeneratedSentence {
    pub fn to_conll(&self) -> ConllSentence {
        let tokens = self
            .tokens
            .iter()
            .zip(&self.tags)
            .enumerate()
            .map(|(i, (text, tag))| Token {
                text: text.clone(),
                annotations: self
                    .annotations
                    .as_ref()
                    .map(|a| a[i].clone())
                    .unwrap_or_default(),
                ner_tag: tag.clone(),
            })
            .collect();
        ConllSentence {
            tokens,
            doc_id: None,
        }
    }

    /// Rebuilds a sentence from a CoNLL record and its sidecar provenance line.
    pub fn from_parts(sentence: &ConllSentence, record: &ProvenanceRecord) -> Result<Self> {
        let tokens = sentence.words();
        let tags = sentence.tags();
        let per_positions: Vec<usize> = extract_entities(&tags)
            .into_iter()
            .filter(|s| s.label == PER && s.len() == 1)
            .map(|s| s.start)
            .collect();
        let mut fills = Vec::with_capacity(record.fills.len());
        for f in &record.fills {
            let entry = NameEntry::new(f.surface.clone(), f.category)?;
            let wanted = match record.case_variant {
                CaseVariant::Original => f.surface.clone(),
                CaseVariant::Lower => f.surface.to_lowercase(),
            };
            let position = per_positions
                .iter()
                .copied()
                .find(|&p| tokens[p] == wanted)
                .ok_or_else(|| {
                    Error::validation(format!(
                        "fill {:?} has no matching PER token in its sentence",
                        f.surface
                    ))
                })?;
            fills.push(Fill {
                slot: f.slot,
                position,
                entry,
            });
        }
        let annotations = if sentence.tokens.iter().any(|t| !t.annotations.is_empty()) {
            Some(sentence.tokens.iter().map(|t| t.annotations.clone()).collect())
        } else {
            None
        };
        Ok(GeneratedSentence {
            gold_spans: fills
                .iter()
                .map(|f| EntitySpan::new(f.position, f.position + 1, PER))
                .collect(),
            tokens,
            tags,
            annotations,
            provenance: Provenance {
                dataset: record.dataset,
                source_id: record.source_id.clone(),
                fills,
                case_variant: record.case_variant,
            },
        })
    }
}

/// Sidecar line format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub dataset: Dataset,
    pub source_id: String,
    pub fills: Vec<FillRecord>,
    pub case_variant: CaseVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillRecord {
    pub slot: usize,
    pub surface: String,
    pub category: DemographicCategory,
}

impl From<&Provenance> for ProvenanceRecord {
    fn from(p: &Provenance) -> Self {
        ProvenanceRecord {
            dataset: p.dataset,
            source_id: p.source_id.clone(),
            fills: p
                .fills
                .iter()
                .map(|f| FillRecord {
                    slot: f.slot,
                    surface: f.entry.surface.clone(),
                    category: f.entry.category,
                })
                .collect(),
            case_variant: p.case_variant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionMode {
    Exhaustive,
    Sample { seed: u64, count: usize },
}

fn check_distinct(names: &[NameEntry]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.surface.as_str()) {
            return Err(Error::validation(format!("duplicate name {:?}", n.surface)));
        }
    }
    Ok(())
}

/// Random access into the deterministic template enumeration.
#[derive(Debug, Clone)]
pub struct Expander<'a> {
    templates: &'a [Template],
    names: &'a [NameEntry],
    /// Cumulative sentence counts; `offsets[i]` is the first index of template i.
    offsets: Vec<u64>,
    total: u64,
}

impl<'a> Expander<'a> {
    pub fn new(templates: &'a [Template], names: &'a [NameEntry]) -> Result<Self> {
        check_distinct(names)?;
        let mut offsets = Vec::with_capacity(templates.len());
        let mut total = 0u64;
        for t in templates {
            offsets.push(total);
            total += expansion_count(names.len(), std::slice::from_ref(t))?;
        }
        Ok(Expander {
            templates,
            names,
            offsets,
            total,
        })
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// The sentence at `index` of the template-major, lexicographic enumeration.
    pub fn get(&self, index: u64) -> Option<GeneratedSentence> {
        if index >= self.total {
            return None;
        }
        let t_idx = self.offsets.partition_point(|&o| o <= index) - 1;
        let template = &self.templates[t_idx];
        let fill = unrank_permutation(
            index - self.offsets[t_idx],
            self.names.len(),
            template.slot_count(),
        );
        Some(self.build(template, &fill))
    }

    fn build(&self, template: &Template, fill: &[usize]) -> GeneratedSentence {
        let surfaces: Vec<&str> = fill.iter().map(|&i| self.names[i].surface.as_str()).collect();
        let tokens = template.instantiate(&surfaces);
        let mut tags = vec!["O".to_string(); tokens.len()];
        let mut fills = Vec::with_capacity(fill.len());
        for (slot, (&name_idx, &pos)) in fill.iter().zip(template.slot_positions()).enumerate() {
            tags[pos] = format!("B-{PER}");
            fills.push(Fill {
                slot,
                position: pos,
                entry: self.names[name_idx].clone(),
            });
        }
        GeneratedSentence {
            gold_spans: fills
                .iter()
                .map(|f| EntitySpan::new(f.position, f.position + 1, PER))
                .collect(),
            tokens,
            tags,
            annotations: None,
            provenance: Provenance {
                dataset: Dataset::Winogender,
                source_id: template.id.clone(),
                fills,
                case_variant: CaseVariant::Original,
            },
        }
    }

    /// Sentences for an index range; the unit of sharding.
    pub fn range(&self, range: std::ops::Range<u64>) -> impl Iterator<Item = GeneratedSentence> + '_ {
        let end = range.end.min(self.total);
        (range.start..end).filter_map(move |i| self.get(i))
    }

    /// Distinct indices chosen uniformly with a seeded generator, in ascending order.
    pub fn sample_indices(&self, seed: u64, count: usize) -> Result<Vec<u64>> {
        if count as u64 > self.total {
            return Err(Error::validation(format!(
                "sample of {count} exceeds the {} available sentences",
                self.total
            )));
        }
        let total = usize::try_from(self.total)
            .map_err(|_| Error::validation("enumeration too large to sample on this platform"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<u64> = rand::seq::index::sample(&mut rng, total, count)
            .into_iter()
            .map(|i| i as u64)
            .collect();
        idx.sort_unstable();
        Ok(idx)
    }
}

/// Decodes `rank` into the rank-th ordered k-tuple of distinct indices below
/// `n`, in lexicographic order.
fn unrank_permutation(mut rank: u64, n: usize, k: usize) -> Vec<usize> {
    let mut available: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let block = falling_factorial((n - j - 1) as u64, k - j - 1).expect("validated count");
        let digit = (rank / block) as usize;
        rank %= block;
        out.push(available.remove(digit));
    }
    out
}

/// Expands templates with the given names.
pub fn expand<'a>(
    templates: &'a [Template],
    names: &'a [NameEntry],
    mode: ExpansionMode,
) -> Result<Box<dyn Iterator<Item = GeneratedSentence> + 'a>> {
    let expander = Expander::new(templates, names)?;
    Ok(match mode {
        ExpansionMode::Exhaustive => {
            let total = expander.len();
            Box::new((0..total).map(move |i| expander.get(i).expect("index in range")))
        }
        ExpansionMode::Sample { seed, count } => {
            let idx = expander.sample_indices(seed, count)?;
            Box::new(idx.into_iter().map(move |i| expander.get(i).expect("index in range")))
        }
    })
}

/// Position of the sole PER entity if the sentence qualifies for in-situ
/// substitution: more than five tokens, exactly one PER entity overall, and
/// that entity a single token.
pub fn insitu_slot(sentence: &ConllSentence) -> Option<usize> {
    if sentence.len() <= 5 {
        return None;
    }
    let mut per = sentence.entities().into_iter().filter(|s| s.label == PER);
    match (per.next(), per.next()) {
        (Some(span), None) if span.len() == 1 => Some(span.start),
        _ => None,
    }
}

/// Substitutes each name into every qualifying corpus sentence.
pub fn synthesize_insitu<'a>(
    corpus: &'a [ConllSentence],
    names: &'a [NameEntry],
) -> impl Iterator<Item = GeneratedSentence> + 'a {
    corpus
        .iter()
        .enumerate()
        .filter_map(|(i, s)| insitu_slot(s).map(|p| (i, s, p)))
        .flat_map(move |(i, s, pos)| {
            names.iter().map(move |name| {
                let mut tokens = s.words();
                tokens[pos] = name.surface.clone();
                let has_annotations = s.tokens.iter().any(|t| !t.annotations.is_empty());
                GeneratedSentence {
                    tokens,
                    tags: s.tags(),
                    annotations: has_annotations
                        .then(|| s.tokens.iter().map(|t| t.annotations.clone()).collect()),
                    gold_spans: vec![EntitySpan::new(pos, pos + 1, PER)],
                    provenance: Provenance {
                        dataset: Dataset::Insitu,
                        source_id: i.to_string(),
                        fills: vec![Fill {
                            slot: 0,
                            position: pos,
                            entry: name.clone(),
                        }],
                        case_variant: CaseVariant::Original,
                    },
                }
            })
        })
}

/// Lower-cases every token, names included. Gold spans are untouched.
pub fn lowercase_variant<I>(sentences: I) -> impl Iterator<Item = GeneratedSentence>
where
    I: IntoIterator<Item = GeneratedSentence>,
{
    sentences.into_iter().map(|mut s| {
        for t in &mut s.tokens {
            *t = t.to_lowercase();
        }
        s.provenance.case_variant = CaseVariant::Lower;
        s
    })
}

/// Names for a corpus: the registry's demographic entries plus its baseline.
pub fn corpus_names(registry: &NameRegistry) -> Vec<NameEntry> {
    registry.names_with_baseline()
}
