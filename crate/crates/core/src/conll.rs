//! CoNLL-2003 style sequence-labeling files.
//!
//! Tags are held internally in IOB2. CoNLL-03 ships IOB1, where `I-X`
//! opens a mention unless it directly continues one of the same type; the
//! parser rewrites those mention-initial tags to `B-X`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{DemographicCategory, NameRegistry};

pub const PER: &str = "PER";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Middle columns (POS, chunk, ...) carried through untouched.
    pub annotations: Vec<String>,
    pub ner_tag: String,
}

impl Token {
    pub fn new(text: impl Into<String>, ner_tag: impl Into<String>) -> Self {
        Token {
            text: text.into(),
            annotations: Vec::new(),
            ner_tag: ner_tag.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConllSentence {
    pub tokens: Vec<Token>,
    pub doc_id: Option<usize>,
}

impl ConllSentence {
    pub fn words(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    pub fn tags(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.ner_tag.clone()).collect()
    }

    pub fn entities(&self) -> Vec<EntitySpan> {
        extract_entities(&self.tags())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Half-open token range `[start, end)` carrying an entity type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos < self.end
    }
}

/// Splits a tag into its prefix (`B`, `I`) and type. `O` and anything
/// unrecognized yield `None`.
pub fn split_tag(tag: &str) -> Option<(char, &str)> {
    let (prefix, ty) = tag.split_once('-')?;
    match prefix {
        "B" if !ty.is_empty() => Some(('B', ty)),
        "I" if !ty.is_empty() => Some(('I', ty)),
        _ => None,
    }
}

pub fn is_valid_tag(tag: &str) -> bool {
    tag == "O" || split_tag(tag).is_some()
}

/// Rewrites mention-initial `I-X` tags to `B-X`. IOB2 input is returned unchanged.
pub fn normalize_iob2(tags: &mut [String]) {
    let mut prev_type: Option<String> = None;
    for tag in tags.iter_mut() {
        match split_tag(tag) {
            Some(('I', ty)) => {
                if prev_type.as_deref() != Some(ty) {
                    let ty = ty.to_string();
                    *tag = format!("B-{ty}");
                    prev_type = Some(ty);
                }
            }
            Some((_, ty)) => prev_type = Some(ty.to_string()),
            None => prev_type = None,
        }
    }
}

/// Maximal entity spans of an IOB2 tag sequence. A stray `I-X` opens a new span.
pub fn extract_entities<S: AsRef<str>>(tags: &[S]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let parsed = split_tag(tag.as_ref());
        let continues = matches!((parsed, open), (Some(('I', ty)), Some((_, cur))) if ty == cur);
        if continues {
            continue;
        }
        if let Some((start, ty)) = open.take() {
            spans.push(EntitySpan::new(start, i, ty));
        }
        if let Some((_, ty)) = parsed {
            open = Some((i, ty));
        }
    }
    if let Some((start, ty)) = open {
        spans.push(EntitySpan::new(start, tags.len(), ty));
    }
    spans
}

/// IOB2 tags for non-overlapping spans over `len` tokens.
pub fn tags_from_spans(len: usize, spans: &[EntitySpan]) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for span in spans {
        for (i, tag) in tags.iter_mut().enumerate().take(span.end).skip(span.start) {
            let prefix = if i == span.start { 'B' } else { 'I' };
            *tag = format!("{prefix}-{}", span.label);
        }
    }
    tags
}

/// Parses whitespace-separated columns; the last column is the NER tag.
pub fn parse_conll<R: BufRead>(stream: R) -> Result<Vec<ConllSentence>> {
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut columns: Option<usize> = None;
    let mut doc_id: Option<usize> = None;
    let mut docs_seen = 0usize;

    fn flush(
        current: &mut Vec<Token>,
        columns: &mut Option<usize>,
        doc_id: Option<usize>,
        out: &mut Vec<ConllSentence>,
    ) {
        if current.is_empty() {
            return;
        }
        let mut tokens = std::mem::take(current);
        let mut tags: Vec<String> = tokens.iter().map(|t| t.ner_tag.clone()).collect();
        normalize_iob2(&mut tags);
        for (tok, tag) in tokens.iter_mut().zip(tags) {
            tok.ner_tag = tag;
        }
        *columns = None;
        out.push(ConllSentence { tokens, doc_id });
    }

    for (idx, line) in stream.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut current, &mut columns, doc_id, &mut sentences);
            continue;
        }
        if line.starts_with("-DOCSTART-") {
            flush(&mut current, &mut columns, doc_id, &mut sentences);
            doc_id = Some(docs_seen);
            docs_seen += 1;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(Error::parse(lineno, "expected at least a token and a tag column"));
        }
        match columns {
            Some(n) if n != fields.len() => {
                return Err(Error::parse(
                    lineno,
                    format!("expected {n} columns, found {}", fields.len()),
                ))
            }
            _ => columns = Some(fields.len()),
        }
        let tag = fields[fields.len() - 1];
        if !is_valid_tag(tag) {
            return Err(Error::parse(lineno, format!("invalid NER tag {tag:?}")));
        }
        current.push(Token {
            text: fields[0].to_string(),
            annotations: fields[1..fields.len() - 1].iter().map(|s| s.to_string()).collect(),
            ner_tag: tag.to_string(),
        });
    }
    flush(&mut current, &mut columns, doc_id, &mut sentences);
    Ok(sentences)
}

/// Emits sentences in CoNLL layout, with a `-DOCSTART-` line whenever the
/// document index changes.
pub fn write_conll(sentences: &[ConllSentence]) -> String {
    let mut out = String::new();
    let mut last_doc: Option<usize> = None;
    for sentence in sentences {
        if sentence.doc_id.is_some() && sentence.doc_id != last_doc {
            out.push_str("-DOCSTART- -X- -X- O\n\n");
            last_doc = sentence.doc_id;
        }
        for tok in &sentence.tokens {
            out.push_str(&tok.text);
            for a in &tok.annotations {
                out.push(' ');
                out.push_str(a);
            }
            let _ = writeln!(out, " {}", tok.ner_tag);
        }
        out.push('\n');
    }
    out
}

/// Occurrences of registry names as unigram PER entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameFrequency {
    /// Per-name counts in registry order, including zero counts.
    pub per_name: Vec<(String, DemographicCategory, usize)>,
    pub per_category: BTreeMap<DemographicCategory, CategoryFrequency>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryFrequency {
    pub total: usize,
    pub most_common: Option<(String, usize)>,
}

/// Counts registry names tagged as single-token PER entities. Matching is
/// case-sensitive on the registry surface.
pub fn name_frequency(corpus: &[ConllSentence], registry: &NameRegistry) -> NameFrequency {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for sentence in corpus {
        for span in sentence.entities() {
            if span.label == PER && span.len() == 1 {
                *counts.entry(sentence.tokens[span.start].text.as_str()).or_default() += 1;
            }
        }
    }
    let names = registry.names_with_baseline();
    let per_name: Vec<(String, DemographicCategory, usize)> = names
        .iter()
        .map(|e| {
            let n = counts.get(e.surface.as_str()).copied().unwrap_or(0);
            (e.surface.clone(), e.category, n)
        })
        .collect();
    let mut per_category = BTreeMap::new();
    for cat in DemographicCategory::ALL {
        let members: Vec<_> = per_name.iter().filter(|(_, c, _)| *c == cat).collect();
        if members.is_empty() {
            continue;
        }
        let total = members.iter().map(|(_, _, n)| n).sum();
        // first maximum in registry order wins ties
        let most_common = members
            .iter()
            .filter(|(_, _, n)| *n > 0)
            .fold(None::<(&String, usize)>, |best, (s, _, n)| match best {
                Some((_, b)) if b >= *n => best,
                _ => Some((s, *n)),
            })
            .map(|(s, n)| (s.clone(), n));
        per_category.insert(cat, CategoryFrequency { total, most_common });
    }
    NameFrequency {
        per_name,
        per_category,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{builtin_registry, load_registry};

    fn tags(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_single_token_normalizes_iob1() {
        let s = parse_conll("Juan NNP B-NP I-PER\n\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tags(), vec!["B-PER"]);
        assert_eq!(s[0].tokens[0].annotations, vec!["NNP", "B-NP"]);
    }

    #[test]
    fn parse_empty() {
        assert!(parse_conll("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn parse_docstart_fixture() {
        let text = "-DOCSTART- -X- -X- O\n\nEU NNP B-NP I-ORG\nrejects VBZ B-VP O\n\n\
                    Peter NNP B-NP I-PER\nBlackburn NNP I-NP I-PER\n\r\n\
                    BRUSSELS NNP B-NP I-LOC\n1996-08-22 CD I-NP O\n";
        let s = parse_conll(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|x| x.doc_id == Some(0)));
        assert_eq!(s[1].tags(), vec!["B-PER", "I-PER"]);
        let docs: std::collections::BTreeSet<_> = s.iter().map(|x| x.doc_id).collect();
        assert_eq!(docs.len(), 1);
    }

    #[test]
    fn parse_rejects_ragged_columns() {
        let err = parse_conll("a NN O\nb O\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn write_formats() {
        assert_eq!(write_conll(&[]), "");
        let one = ConllSentence {
            tokens: vec![Token::new("Jose", "B-PER")],
            doc_id: None,
        };
        assert_eq!(write_conll(&[one]), "Jose B-PER\n\n");
    }

    #[test]
    fn entity_extraction() {
        assert_eq!(extract_entities(&tags(&["B-PER"])), vec![EntitySpan::new(0, 1, "PER")]);
        assert_eq!(
            extract_entities(&tags(&["B-PER", "I-PER", "O", "B-LOC"])),
            vec![EntitySpan::new(0, 2, "PER"), EntitySpan::new(3, 4, "LOC")]
        );
        assert_eq!(
            extract_entities(&tags(&["B-PER", "B-PER"])),
            vec![EntitySpan::new(0, 1, "PER"), EntitySpan::new(1, 2, "PER")]
        );
        // stray continuation
        assert_eq!(
            extract_entities(&tags(&["O", "I-LOC", "I-PER"])),
            vec![EntitySpan::new(1, 2, "LOC"), EntitySpan::new(2, 3, "PER")]
        );
    }

    #[test]
    fn frequency_counts() {
        let reg = load_registry("Maria,HF\nJose,HM\nPaul,WM\n".as_bytes()).unwrap();
        let text = "Maria B-PER\nsaid O\n\nJose B-PER\n\nJose B-PER\nand O\nMaria B-PER\n\n\
                    Jose B-PER\nPerez I-PER\n\nJose B-LOC\n\nJose B-PER\n\n";
        let corpus = parse_conll(text.as_bytes()).unwrap();
        let f = name_frequency(&corpus, &reg);
        assert_eq!(f.per_category[&DemographicCategory::HF].total, 2);
        assert_eq!(f.per_category[&DemographicCategory::HM].total, 3);
        assert_eq!(
            f.per_category[&DemographicCategory::HM].most_common,
            Some(("Jose".to_string(), 3))
        );
        assert_eq!(f.per_category[&DemographicCategory::WM].most_common, None);

        let empty = name_frequency(&[], &builtin_registry());
        assert!(empty.per_name.iter().all(|(_, _, n)| *n == 0));
        assert_eq!(empty.per_category.len(), 9);
    }

    #[test]
    fn frequency_paul_51() {
        let reg = builtin_registry();
        let mut text = String::new();
        for _ in 0..51 {
            text.push_str("Paul B-PER\nwon O\n\n");
        }
        for _ in 0..7 {
            text.push_str("Adam B-PER\n\n");
        }
        let f = name_frequency(&parse_conll(text.as_bytes()).unwrap(), &reg);
        let wm = &f.per_category[&DemographicCategory::WM];
        assert_eq!(wm.most_common, Some(("Paul".to_string(), 51)));
        assert_eq!(wm.total, 58);
    }

    fn arb_tags() -> impl proptest::strategy::Strategy<Value = Vec<String>> {
        use proptest::prelude::*;
        prop::collection::vec(
            prop::sample::select(vec!["O", "B-PER", "I-PER", "B-LOC", "I-LOC", "I-ORG"]),
            0..12,
        )
        .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest::proptest! {
        #[test]
        fn normalization_is_idempotent(mut t in arb_tags()) {
            normalize_iob2(&mut t);
            let once = t.clone();
            normalize_iob2(&mut t);
            proptest::prop_assert_eq!(t, once);
        }

        #[test]
        fn spans_round_trip_through_tags(mut t in arb_tags()) {
            normalize_iob2(&mut t);
            let spans = extract_entities(&t);
            proptest::prop_assert_eq!(tags_from_spans(t.len(), &spans), t.clone());
            for s in &spans {
                for tag in &t[s.start..s.end] {
                    proptest::prop_assert_eq!(split_tag(tag).unwrap().1, s.label.as_str());
                }
            }
        }

        #[test]
        fn write_then_parse_is_identity(raw in proptest::collection::vec(arb_tags(), 0..5)) {
            let sentences: Vec<ConllSentence> = raw
                .into_iter()
                .filter(|t| !t.is_empty())
                .enumerate()
                .map(|(i, mut t)| {
                    normalize_iob2(&mut t);
                    ConllSentence {
                        tokens: t.into_iter().enumerate()
                            .map(|(j, tag)| Token::new(format!("w{i}_{j}"), tag))
                            .collect(),
                        doc_id: None,
                    }
                })
                .collect();
            let again = parse_conll(write_conll(&sentences).as_bytes()).unwrap();
            proptest::prop_assert_eq!(again, sentences);
        }
    }
}
