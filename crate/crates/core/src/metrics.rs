//! Per-name and per-category recognition metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{AliasTable, TagResponse};
use crate::conll::{extract_entities, PER};
use crate::error::{Error, Result};
use crate::registry::DemographicCategory;
use crate::templates::{CaseVariant, Dataset, GeneratedSentence};

/// What the tagger made of one name fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Per,
    Loc,
    Org,
    Misc,
    Other,
    None,
}

impl Outcome {
    pub const ALL: [Outcome; 6] = [
        Outcome::Per,
        Outcome::Loc,
        Outcome::Org,
        Outcome::Misc,
        Outcome::Other,
        Outcome::None,
    ];

    fn from_label(label: &str) -> Outcome {
        match AliasTable::default().canonical(label) {
            "PER" => Outcome::Per,
            "LOC" => Outcome::Loc,
            "ORG" => Outcome::Org,
            "MISC" => Outcome::Misc,
            _ => Outcome::Other,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// One scored name fill. A line of the raw outcome file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillOutcome {
    pub dataset: Dataset,
    pub source_id: String,
    pub case_variant: CaseVariant,
    pub slot: usize,
    pub position: usize,
    pub surface: String,
    pub category: DemographicCategory,
    pub outcome: Outcome,
    /// A PER entity covered the fill but was not exactly that one token.
    pub per_overlap: bool,
    /// Confidence of the exact PER span, when the backend reports one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confidence: Option<f64>,
}

/// Scores every fill of `sentence`: PER iff the predicted entities include
/// exactly the one-token PER span at the fill position.
pub fn score_sentence(
    prediction: &TagResponse,
    sentence: &GeneratedSentence,
) -> Result<Vec<FillOutcome>> {
    if prediction.tags.len() != sentence.tokens.len() {
        return Err(Error::protocol(
            Some(prediction.id),
            format!(
                "{} tags for {} tokens",
                prediction.tags.len(),
                sentence.tokens.len()
            ),
        ));
    }
    let spans = extract_entities(&prediction.tags);
    let prov = &sentence.provenance;
    Ok(prov
        .fills
        .iter()
        .map(|fill| {
            let pos = fill.position;
            let covering = spans.iter().enumerate().find(|(_, s)| s.contains(pos));
            let (outcome, per_overlap, confidence) = match covering {
                Some((i, s)) if s.label == PER && s.start == pos && s.end == pos + 1 => (
                    Outcome::Per,
                    false,
                    prediction
                        .confidences
                        .as_ref()
                        .and_then(|c| c.get(i).copied()),
                ),
                Some((_, s)) if s.label == PER => (Outcome::None, true, None),
                Some((_, s)) => (Outcome::from_label(&s.label), false, None),
                None => (Outcome::None, false, None),
            };
            FillOutcome {
                dataset: prov.dataset,
                source_id: prov.source_id.clone(),
                case_variant: prov.case_variant,
                slot: fill.slot,
                position: pos,
                surface: fill.entry.surface.clone(),
                category: fill.entry.category,
                outcome,
                per_overlap,
                confidence,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameAudit {
    pub surface: String,
    pub category: DemographicCategory,
    pub dataset: Dataset,
    pub case_variant: CaseVariant,
    pub n_total: u64,
    pub n_person: u64,
    /// p(PER | name).
    pub accuracy: f64,
    pub label_distribution: BTreeMap<Outcome, f64>,
    pub n_per_overlap: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct NameCounts {
    category: Option<DemographicCategory>,
    outcomes: [u64; 6],
    per_overlap: u64,
    confidences: Vec<f64>,
}

type NameKey = (Dataset, CaseVariant, String);

/// Shard-local outcome tallies. Merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditAccumulator {
    names: BTreeMap<NameKey, NameCounts>,
}

impl AuditAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, o: &FillOutcome) {
        let c = self
            .names
            .entry((o.dataset, o.case_variant, o.surface.clone()))
            .or_default();
        c.category = Some(o.category);
        c.outcomes[o.outcome.index()] += 1;
        c.per_overlap += u64::from(o.per_overlap);
        if o.outcome == Outcome::Per {
            if let Some(conf) = o.confidence {
                c.confidences.push(conf);
            }
        }
    }

    pub fn extend<'a>(&mut self, outcomes: impl IntoIterator<Item = &'a FillOutcome>) {
        for o in outcomes {
            self.add(o);
        }
    }

    pub fn merge(&mut self, other: AuditAccumulator) {
        for (k, v) in other.names {
            let c = self.names.entry(k).or_default();
            c.category = c.category.or(v.category);
            for (a, b) in c.outcomes.iter_mut().zip(v.outcomes) {
                *a += b;
            }
            c.per_overlap += v.per_overlap;
            c.confidences.extend(v.confidences);
        }
    }

    /// Audits grouped by (dataset, case variant, surface), in that order.
    pub fn name_audits(&self) -> Vec<NameAudit> {
        self.names
            .iter()
            .map(|((dataset, case_variant, surface), c)| {
                let n_total: u64 = c.outcomes.iter().sum();
                let label_distribution = Outcome::ALL
                    .iter()
                    .filter(|o| c.outcomes[o.index()] > 0)
                    .map(|&o| (o, c.outcomes[o.index()] as f64 / n_total as f64))
                    .collect();
                let n_person = c.outcomes[Outcome::Per.index()];
                NameAudit {
                    surface: surface.clone(),
                    category: c.category.expect("set on insert"),
                    dataset: *dataset,
                    case_variant: *case_variant,
                    n_total,
                    n_person,
                    accuracy: n_person as f64 / n_total as f64,
                    label_distribution,
                    n_per_overlap: c.per_overlap,
                }
            })
            .collect()
    }

    /// PER-prediction confidences per name, sorted ascending.
    pub fn confidences(&self) -> Vec<NameConfidences> {
        self.names
            .iter()
            .map(|((dataset, case_variant, surface), c)| {
                let mut values = c.confidences.clone();
                values.sort_by(f64::total_cmp);
                NameConfidences {
                    surface: surface.clone(),
                    category: c.category.expect("set on insert"),
                    dataset: *dataset,
                    case_variant: *case_variant,
                    values,
                }
            })
            .collect()
    }
}

pub fn name_audits<'a>(outcomes: impl IntoIterator<Item = &'a FillOutcome>) -> Vec<NameAudit> {
    let mut acc = AuditAccumulator::new();
    acc.extend(outcomes);
    acc.name_audits()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Weighting {
    /// p(n) = 1 / N_c.
    UniformNames,
    /// p(n) proportional to the name's instance count.
    InstanceWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAudit {
    pub category: DemographicCategory,
    pub per_name: Vec<NameAudit>,
    pub accuracy: f64,
    pub weighting: Weighting,
}

/// p(PER | category) = Σ_n p(n) · p(PER | n), one entry per category present.
pub fn category_accuracy(audits: &[NameAudit], weighting: Weighting) -> Vec<CategoryAudit> {
    let mut groups: BTreeMap<DemographicCategory, Vec<NameAudit>> = BTreeMap::new();
    for a in audits {
        groups.entry(a.category).or_default().push(a.clone());
    }
    groups
        .into_iter()
        .map(|(category, per_name)| {
            let accuracy = match weighting {
                Weighting::UniformNames => {
                    per_name.iter().map(|a| a.accuracy).sum::<f64>() / per_name.len() as f64
                }
                Weighting::InstanceWeighted => {
                    let person: u64 = per_name.iter().map(|a| a.n_person).sum();
                    let total: u64 = per_name.iter().map(|a| a.n_total).sum();
                    person as f64 / total as f64
                }
            };
            CategoryAudit {
                category,
                per_name,
                accuracy,
                weighting,
            }
        })
        .collect()
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfCurve {
    /// Distinct sorted values with F at each.
    pub points: Vec<(f64, f64)>,
}

impl EcdfCurve {
    /// Fraction of the sample ≤ `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|p| p.0 <= x);
        if k == 0 {
            0.0
        } else {
            self.points[k - 1].1
        }
    }

    /// Fraction of the sample strictly below `x`.
    pub fn eval_below(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|p| p.0 < x);
        if k == 0 {
            0.0
        } else {
            self.points[k - 1].1
        }
    }
}

pub fn ecdf(values: &[f64]) -> Result<EcdfCurve> {
    if values.is_empty() {
        return Err(Error::validation("ECDF of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::validation("ECDF sample contains NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == v => last.1 = f,
            _ => points.push((v, f)),
        }
    }
    if let Some(last) = points.last_mut() {
        last.1 = 1.0;
    }
    Ok(EcdfCurve { points })
}

/// Share of `accuracies` strictly below `baseline`. Zero for an empty slice.
pub fn below_baseline_fraction(accuracies: &[f64], baseline: f64) -> f64 {
    if accuracies.is_empty() {
        return 0.0;
    }
    accuracies.iter().filter(|&&a| a < baseline).count() as f64 / accuracies.len() as f64
}

/// Percentile `q ∈ [0, 1]` of ascending `sorted` by linear interpolation
/// between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_pop(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameConfidences {
    pub surface: String,
    pub category: DemographicCategory,
    pub dataset: Dataset,
    pub case_variant: CaseVariant,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceStats {
    pub surface: String,
    pub category: DemographicCategory,
    pub n: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

/// Summary of each name's PER confidences. Names without any are returned
/// separately by surface.
pub fn confidence_stats(
    names: &[NameConfidences],
) -> Result<(Vec<ConfidenceStats>, Vec<String>)> {
    let mut stats = Vec::new();
    let mut skipped = Vec::new();
    for n in names {
        if n.values.is_empty() {
            skipped.push(n.surface.clone());
            continue;
        }
        if let Some(bad) = n.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::validation(format!(
                "confidence {bad} for {} lies outside [0, 1]",
                n.surface
            )));
        }
        let mut v = n.values.clone();
        v.sort_by(f64::total_cmp);
        stats.push(ConfidenceStats {
            surface: n.surface.clone(),
            category: n.category,
            n: v.len(),
            min: v[0],
            p25: percentile(&v, 0.25),
            median: percentile(&v, 0.5),
            mean: mean(&v),
            std: std_pop(&v),
            max: v[v.len() - 1],
        });
    }
    Ok((stats, skipped))
}

/// One row of a range table: spread of a per-name statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRow {
    pub n: usize,
    pub min: f64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

pub fn range_row(values: &[f64]) -> Result<RangeRow> {
    if values.is_empty() {
        return Err(Error::validation("range of an empty group"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(RangeRow {
        n: v.len(),
        min: v[0],
        mean: mean(&v),
        std: std_pop(&v),
        median: percentile(&v, 0.5),
    })
}

/// Range table over a per-name statistic: one row across all names, plus
/// one per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTable {
    pub overall: RangeRow,
    pub by_category: BTreeMap<DemographicCategory, RangeRow>,
}

pub fn range_table(values: &[(DemographicCategory, f64)]) -> Result<RangeTable> {
    let all: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
    let mut groups: BTreeMap<DemographicCategory, Vec<f64>> = BTreeMap::new();
    for (c, v) in values {
        groups.entry(*c).or_default().push(*v);
    }
    Ok(RangeTable {
        overall: range_row(&all)?,
        by_category: groups
            .into_iter()
            .map(|(c, v)| Ok((c, range_row(&v)?)))
            .collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conll::EntitySpan;
    use crate::registry::NameEntry;
    use crate::templates::{Fill, Provenance};
    use proptest::prelude::*;

    fn sentence(tokens: &[&str], fill_positions: &[usize]) -> GeneratedSentence {
        let fills: Vec<Fill> = fill_positions
            .iter()
            .enumerate()
            .map(|(slot, &position)| Fill {
                slot,
                position,
                entry: NameEntry::new(tokens[position], DemographicCategory::MF).unwrap(),
            })
            .collect();
        GeneratedSentence {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            tags: vec!["O".into(); tokens.len()],
            annotations: None,
            gold_spans: fill_positions
                .iter()
                .map(|&p| EntitySpan::new(p, p + 1, PER))
                .collect(),
            provenance: Provenance {
                dataset: Dataset::Winogender,
                source_id: "0".into(),
                fills,
                case_variant: CaseVariant::Original,
            },
        }
    }

    fn resp(tags: &[&str], conf: Option<Vec<f64>>) -> TagResponse {
        TagResponse {
            id: 0,
            tags: tags.iter().map(|s| s.to_string()).collect(),
            confidences: conf,
        }
    }

    #[test]
    fn exact_unigram_is_per() {
        let s = sentence(&["Jana", "met", "Theo"], &[0, 2]);
        let o = score_sentence(&resp(&["B-PER", "O", "B-LOC"], Some(vec![0.9, 0.7])), &s).unwrap();
        assert_eq!(o[0].outcome, Outcome::Per);
        assert_eq!(o[0].confidence, Some(0.9));
        assert_eq!(o[1].outcome, Outcome::Loc);
        assert_eq!(o[1].confidence, None);
    }

    #[test]
    fn wider_per_is_a_miss_with_overlap() {
        let s = sentence(&["Jana", "Smith", "left"], &[0]);
        let o = score_sentence(&resp(&["B-PER", "I-PER", "O"], None), &s).unwrap();
        assert_eq!(o[0].outcome, Outcome::None);
        assert!(o[0].per_overlap);
        let o = score_sentence(&resp(&["O", "O", "O"], None), &s).unwrap();
        assert_eq!(o[0].outcome, Outcome::None);
        assert!(!o[0].per_overlap);
        let o = score_sentence(&resp(&["B-GPE", "O", "O"], None), &s).unwrap();
        assert_eq!(o[0].outcome, Outcome::Loc);
        let o = score_sentence(&resp(&["B-DATE", "O", "O"], None), &s).unwrap();
        assert_eq!(o[0].outcome, Outcome::Other);
        assert!(score_sentence(&resp(&["O"], None), &s).is_err());
    }

    fn fill(surface: &str, outcome: Outcome) -> FillOutcome {
        FillOutcome {
            dataset: Dataset::Winogender,
            source_id: "0".into(),
            case_variant: CaseVariant::Original,
            slot: 0,
            position: 0,
            surface: surface.into(),
            category: DemographicCategory::MF,
            outcome,
            per_overlap: false,
            confidence: None,
        }
    }

    #[test]
    fn name_audit_arithmetic() {
        let xs: Vec<FillOutcome> = [Outcome::Per, Outcome::Per, Outcome::Loc, Outcome::None]
            .iter()
            .map(|&o| fill("Salma", o))
            .collect();
        let a = &name_audits(&xs)[0];
        assert_eq!(a.accuracy, 0.5);
        assert_eq!(a.label_distribution[&Outcome::Loc], 0.25);
        assert_eq!(a.label_distribution[&Outcome::None], 0.25);
        assert!(name_audits(&xs).iter().all(|a| a.surface != "Jana"));
    }

    #[test]
    fn salma_split_is_exact() {
        let mut xs = Vec::new();
        for (o, k) in [(Outcome::Per, 51), (Outcome::Loc, 36), (Outcome::Org, 13)] {
            xs.extend(std::iter::repeat_n(fill("Salma", o), k));
        }
        let a = &name_audits(&xs)[0];
        assert_eq!(a.label_distribution[&Outcome::Per], 0.51);
        assert_eq!(a.label_distribution[&Outcome::Loc], 0.36);
    }

    fn audit(surface: &str, n_total: u64, n_person: u64) -> NameAudit {
        NameAudit {
            surface: surface.into(),
            category: DemographicCategory::BF,
            dataset: Dataset::Winogender,
            case_variant: CaseVariant::Original,
            n_total,
            n_person,
            accuracy: n_person as f64 / n_total as f64,
            label_distribution: BTreeMap::new(),
            n_per_overlap: 0,
        }
    }

    #[test]
    fn weighting_modes() {
        let audits = [audit("A", 10, 10), audit("B", 30, 15)];
        let u = category_accuracy(&audits, Weighting::UniformNames);
        assert_eq!(u[0].accuracy, 0.75);
        let w = category_accuracy(&audits, Weighting::InstanceWeighted);
        assert_eq!(w[0].accuracy, 0.625);
    }

    #[test]
    fn ecdf_basics() {
        let e = ecdf(&[0.2, 0.8]).unwrap();
        assert_eq!(e.eval(0.5), 0.5);
        assert_eq!(e.eval(0.1), 0.0);
        assert_eq!(e.eval(0.8), 1.0);
        assert_eq!(e.eval(0.2), 0.5);
        assert!(ecdf(&[]).is_err());
        let e = ecdf(&[0.5, 0.5, 0.1]).unwrap();
        assert_eq!(e.points.len(), 2);
        assert!((e.points[0].1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn baseline_fraction() {
        assert_eq!(below_baseline_fraction(&[0.3, 0.9], 0.5), 0.5);
        assert_eq!(below_baseline_fraction(&[0.6, 0.9], 0.5), 0.0);
        assert_eq!(below_baseline_fraction(&[0.5], 0.5), 0.0);
    }

    #[test]
    fn percentile_conventions() {
        let v = [0.2, 0.4, 0.6, 0.8];
        assert!((percentile(&v, 0.5) - 0.5).abs() < 1e-15);
        assert!((percentile(&v, 0.25) - 0.35).abs() < 1e-15);
        let one = NameConfidences {
            surface: "Alya".into(),
            category: DemographicCategory::WF,
            dataset: Dataset::Winogender,
            case_variant: CaseVariant::Original,
            values: vec![0.7],
        };
        let none = NameConfidences {
            surface: "Jana".into(),
            values: vec![],
            ..one.clone()
        };
        let (s, skipped) = confidence_stats(&[one, none]).unwrap();
        assert_eq!(skipped, vec!["Jana"]);
        let s = &s[0];
        assert_eq!((s.min, s.mean, s.median, s.p25, s.std), (0.7, 0.7, 0.7, 0.7, 0.0));
    }

    #[test]
    fn range_rows() {
        let r = range_row(&[0.0, 1.0]).unwrap();
        assert_eq!((r.min, r.mean, r.std, r.median), (0.0, 0.5, 0.5, 0.5));
        assert_eq!(range_row(&[0.3; 5]).unwrap().std, 0.0);
        // Hand computed: mean 0.5, squared deviations sum to 0.52.
        let v = [0.1, 0.2, 0.3, 0.5, 0.6, 0.7, 0.8, 0.8];
        let r = range_row(&v).unwrap();
        assert!((r.mean - 0.5).abs() < 1e-12);
        assert!((r.std - (0.52f64 / 8.0).sqrt()).abs() < 1e-12);
        assert!((r.median - 0.55).abs() < 1e-12);
        assert_eq!(r.min, 0.1);
    }

    fn outcome_strategy() -> impl Strategy<Value = Vec<FillOutcome>> {
        prop::collection::vec((0usize..4, 0usize..6), 1..60).prop_map(|xs| {
            xs.into_iter()
                .map(|(name, o)| fill(["Ana", "Ben", "Cy", "Di"][name], Outcome::ALL[o]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn distributions_sum_to_one(xs in outcome_strategy()) {
            for a in name_audits(&xs) {
                let s: f64 = a.label_distribution.values().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                prop_assert_eq!(a.label_distribution.get(&Outcome::Per).copied().unwrap_or(0.0), a.accuracy);
                prop_assert!(a.n_person <= a.n_total);
            }
        }

        #[test]
        fn uniform_weighting_ignores_duplication(xs in outcome_strategy(), k in 2usize..5) {
            let once = category_accuracy(&name_audits(&xs), Weighting::UniformNames);
            let dup: Vec<FillOutcome> = xs.iter().flat_map(|x| std::iter::repeat_n(x.clone(), k)).collect();
            let many = category_accuracy(&name_audits(&dup), Weighting::UniformNames);
            for (a, b) in once.iter().zip(&many) {
                prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
            }
        }

        #[test]
        fn merge_equals_single_pass(xs in outcome_strategy(), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let mut left = AuditAccumulator::new();
            left.extend(&xs[..cut]);
            let mut right = AuditAccumulator::new();
            right.extend(&xs[cut..]);
            left.merge(right);
            prop_assert_eq!(left.name_audits(), name_audits(&xs));
        }

        #[test]
        fn ecdf_is_monotone_and_counts(values in prop::collection::vec(0.0f64..1.0, 1..50), q in -0.1f64..1.1) {
            let e = ecdf(&values).unwrap();
            prop_assert!(e.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
            prop_assert_eq!(e.points.last().unwrap().1, 1.0);
            let count = values.iter().filter(|&&v| v <= q).count() as f64 / values.len() as f64;
            prop_assert!((e.eval(q) - count).abs() < 1e-12);
            prop_assert!((e.eval_below(q) - below_baseline_fraction(&values, q)).abs() < 1e-12);
        }
    }
}
