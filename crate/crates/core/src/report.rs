//! Audit reports: JSON, CSV tables, ECDF point files, and multi-model
//! comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    below_baseline_fraction, category_accuracy, confidence_stats, ecdf, range_table,
    AuditAccumulator, ConfidenceStats, EcdfCurve, FillOutcome, NameAudit, RangeTable, Weighting,
};
use crate::registry::{category_rollup, Axis, DemographicCategory};
use crate::templates::{CaseVariant, Dataset};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model_name: String,
    pub backend: String,
    pub registry_digest: String,
    #[serde(default)]
    pub template_digest: Option<String>,
    /// Digest of the CoNLL source used for in-situ substitution.
    #[serde(default)]
    pub source_digest: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sample: Option<u64>,
    pub weighting: Weighting,
    pub case_variants: Vec<CaseVariant>,
    pub has_confidence: bool,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: DemographicCategory,
    pub display_name: String,
    pub accuracy: f64,
    pub n_names: usize,
    pub n_instances: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub surface: String,
    pub accuracy: f64,
    pub n_instances: u64,
    #[serde(default)]
    pub median_confidence: Option<f64>,
    #[serde(default)]
    pub p25_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfSet {
    pub by_category: BTreeMap<String, EcdfCurve>,
    pub by_gender: BTreeMap<String, EcdfCurve>,
    pub by_race: BTreeMap<String, EcdfCurve>,
    /// Reference value drawn as a vertical line, when a baseline exists.
    #[serde(default)]
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSection {
    pub stats: Vec<ConfidenceStats>,
    pub skipped: Vec<String>,
    /// Spread of per-name median confidence.
    #[serde(default)]
    pub median_range: Option<RangeTable>,
    /// ECDF of per-name 25th-percentile confidence.
    #[serde(default)]
    pub p25_ecdf: Option<EcdfSet>,
    pub below_baseline: BTreeMap<DemographicCategory, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub dataset: Dataset,
    pub case_variant: CaseVariant,
    pub n_fills: u64,
    /// Mean of the demographic category accuracies.
    pub overall_accuracy: f64,
    pub category_table: Vec<CategoryRow>,
    #[serde(default)]
    pub baseline: Option<BaselineRow>,
    #[serde(default)]
    pub accuracy_range: Option<RangeTable>,
    pub accuracy_ecdf: EcdfSet,
    pub below_baseline: BTreeMap<DemographicCategory, f64>,
    /// Absent when the backend reports no confidences.
    #[serde(default)]
    pub confidence: Option<ConfidenceSection>,
    pub name_audits: Vec<NameAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub sections: Vec<ReportSection>,
}

fn group_ecdfs(values: &[(DemographicCategory, f64)], baseline: Option<f64>) -> Result<EcdfSet> {
    let mut cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut gender: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut race: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &(c, v) in values {
        cat.entry(c.code().to_string()).or_default().push(v);
        gender
            .entry(category_rollup(c, Axis::Gender)?.to_string())
            .or_default()
            .push(v);
        race.entry(category_rollup(c, Axis::Race)?.to_string())
            .or_default()
            .push(v);
    }
    let curves = |m: BTreeMap<String, Vec<f64>>| -> Result<BTreeMap<String, EcdfCurve>> {
        m.into_iter().map(|(k, v)| Ok((k, ecdf(&v)?))).collect()
    };
    Ok(EcdfSet {
        by_category: curves(cat)?,
        by_gender: curves(gender)?,
        by_race: curves(race)?,
        baseline,
    })
}

fn below_by_category(
    values: &[(DemographicCategory, f64)],
    baseline: f64,
) -> BTreeMap<DemographicCategory, f64> {
    let mut groups: BTreeMap<DemographicCategory, Vec<f64>> = BTreeMap::new();
    for &(c, v) in values {
        groups.entry(c).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|(c, v)| (c, below_baseline_fraction(&v, baseline)))
        .collect()
}

fn build_section(
    dataset: Dataset,
    case_variant: CaseVariant,
    acc: &AuditAccumulator,
    weighting: Weighting,
    has_confidence: bool,
) -> Result<ReportSection> {
    let audits: Vec<NameAudit> = acc
        .name_audits()
        .into_iter()
        .filter(|a| a.dataset == dataset && a.case_variant == case_variant)
        .collect();
    let n_fills = audits.iter().map(|a| a.n_total).sum();
    let (baseline_audits, demo): (Vec<NameAudit>, Vec<NameAudit>) =
        audits.iter().cloned().partition(|a| a.category.is_baseline());
    let categories = category_accuracy(&demo, weighting);
    let category_table: Vec<CategoryRow> = categories
        .iter()
        .map(|c| CategoryRow {
            category: c.category,
            display_name: c.category.display_name().to_string(),
            accuracy: c.accuracy,
            n_names: c.per_name.len(),
            n_instances: c.per_name.iter().map(|a| a.n_total).sum(),
        })
        .collect();
    let overall_accuracy = if category_table.is_empty() {
        0.0
    } else {
        category_table.iter().map(|r| r.accuracy).sum::<f64>() / category_table.len() as f64
    };

    let per_name_acc: Vec<(DemographicCategory, f64)> =
        demo.iter().map(|a| (a.category, a.accuracy)).collect();
    let baseline_acc = baseline_audits.first().map(|a| a.accuracy);

    let confidence = if has_confidence {
        let names: Vec<_> = acc
            .confidences()
            .into_iter()
            .filter(|n| n.dataset == dataset && n.case_variant == case_variant)
            .collect();
        let (stats, skipped) = confidence_stats(&names)?;
        let (base_stats, demo_stats): (Vec<&ConfidenceStats>, Vec<&ConfidenceStats>) =
            stats.iter().partition(|s| s.category.is_baseline());
        let medians: Vec<(DemographicCategory, f64)> =
            demo_stats.iter().map(|s| (s.category, s.median)).collect();
        let p25s: Vec<(DemographicCategory, f64)> =
            demo_stats.iter().map(|s| (s.category, s.p25)).collect();
        let base_p25 = base_stats.first().map(|s| s.p25);
        Some(ConfidenceSection {
            median_range: if medians.is_empty() {
                None
            } else {
                Some(range_table(&medians)?)
            },
            p25_ecdf: if p25s.is_empty() {
                None
            } else {
                Some(group_ecdfs(&p25s, base_p25)?)
            },
            below_baseline: base_p25
                .map(|b| below_by_category(&p25s, b))
                .unwrap_or_default(),
            stats,
            skipped,
        })
    } else {
        None
    };

    let baseline = baseline_audits.first().map(|a| {
        let conf = confidence
            .as_ref()
            .and_then(|c| c.stats.iter().find(|s| s.surface == a.surface));
        BaselineRow {
            surface: a.surface.clone(),
            accuracy: a.accuracy,
            n_instances: a.n_total,
            median_confidence: conf.map(|s| s.median),
            p25_confidence: conf.map(|s| s.p25),
        }
    });

    Ok(ReportSection {
        dataset,
        case_variant,
        n_fills,
        overall_accuracy,
        category_table,
        baseline,
        accuracy_range: if per_name_acc.is_empty() {
            None
        } else {
            Some(range_table(&per_name_acc)?)
        },
        accuracy_ecdf: group_ecdfs(&per_name_acc, baseline_acc)?,
        below_baseline: baseline_acc
            .map(|b| below_by_category(&per_name_acc, b))
            .unwrap_or_default(),
        confidence,
        name_audits: audits,
    })
}

/// Assembles a report from raw fill outcomes, one section per
/// (dataset, case variant) present.
pub fn build_report(metadata: ReportMetadata, outcomes: &[FillOutcome]) -> Result<AuditReport> {
    let mut acc = AuditAccumulator::new();
    acc.extend(outcomes);
    let mut keys: Vec<(Dataset, CaseVariant)> =
        outcomes.iter().map(|o| (o.dataset, o.case_variant)).collect();
    keys.sort();
    keys.dedup();
    let sections = keys
        .into_iter()
        .map(|(d, c)| build_section(d, c, &acc, metadata.weighting, metadata.has_confidence))
        .collect::<Result<_>>()?;
    Ok(AuditReport {
        schema_version: SCHEMA_VERSION,
        metadata,
        sections,
    })
}

impl AuditReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::validation(format!("unsupported schema_version {v}"))),
            None => return Err(Error::validation("report lacks schema_version")),
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_json(&text).map_err(|e| e.in_file(path))
    }

    pub fn section(&self, dataset: Dataset, case_variant: CaseVariant) -> Option<&ReportSection> {
        self.sections
            .iter()
            .find(|s| s.dataset == dataset && s.case_variant == case_variant)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn section_prefix(s: &ReportSection) -> String {
    format!("{}_{}", s.dataset.as_str(), s.case_variant.as_str())
}

fn ecdf_text(curve: &EcdfCurve) -> String {
    let mut out = String::from("x,F\n");
    for (x, f) in &curve.points {
        let _ = writeln!(out, "{x},{f}");
    }
    out
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::from(e).in_file(parent))?;
    }
    fs::write(&path, contents).map_err(|e| Error::from(e).in_file(&path))
}

fn write_ecdf_set(dir: &Path, stem: &str, set: &EcdfSet) -> Result<()> {
    for (axis, curves) in [
        ("category", &set.by_category),
        ("gender", &set.by_gender),
        ("race", &set.by_race),
    ] {
        for (group, curve) in curves {
            write(dir, &format!("ecdf/{stem}_{axis}_{group}.txt"), &ecdf_text(curve))?;
        }
    }
    Ok(())
}

/// Writes `report.json`, `outcomes.jsonl`, CSV tables and ECDF point files.
/// File contents depend only on the inputs.
pub fn write_report_files(dir: &Path, report: &AuditReport, outcomes: &[FillOutcome]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    write(dir, "report.json", &report.to_json()?)?;

    let mut lines = String::new();
    for o in outcomes {
        lines.push_str(&serde_json::to_string(o)?);
        lines.push('\n');
    }
    write(dir, "outcomes.jsonl", &lines)?;

    let mut cat = String::from("dataset,case_variant,category,name,accuracy,n_names,n_instances\n");
    let mut names = String::from(
        "dataset,case_variant,surface,category,n_total,n_person,accuracy,PER,LOC,ORG,MISC,OTHER,NONE,n_per_overlap\n",
    );
    let mut ranges = String::from("dataset,case_variant,statistic,group,n,min,mean,std,median\n");
    let mut conf = String::from(
        "dataset,case_variant,surface,category,n,min,p25,median,mean,std,max\n",
    );
    let mut below = String::from("dataset,case_variant,statistic,category,fraction_below_baseline\n");
    use crate::metrics::Outcome;
    for s in &report.sections {
        let (d, c) = (s.dataset.as_str(), s.case_variant.as_str());
        for r in &s.category_table {
            let _ = writeln!(
                cat,
                "{d},{c},{},{},{},{},{}",
                r.category, r.display_name, r.accuracy, r.n_names, r.n_instances
            );
        }
        if let Some(b) = &s.baseline {
            let _ = writeln!(
                cat,
                "{d},{c},OOV,OOV Name,{},1,{}",
                b.accuracy, b.n_instances
            );
        }
        for a in &s.name_audits {
            let dist: Vec<String> = Outcome::ALL
                .iter()
                .map(|o| a.label_distribution.get(o).copied().unwrap_or(0.0).to_string())
                .collect();
            let _ = writeln!(
                names,
                "{d},{c},{},{},{},{},{},{},{}",
                a.surface,
                a.category,
                a.n_total,
                a.n_person,
                a.accuracy,
                dist.join(","),
                a.n_per_overlap
            );
        }
        let mut range_rows = |stat: &str, t: &RangeTable| {
            let rows = std::iter::once(("ALL".to_string(), &t.overall))
                .chain(t.by_category.iter().map(|(k, v)| (k.code().to_string(), v)));
            for (g, r) in rows {
                let _ = writeln!(
                    ranges,
                    "{d},{c},{stat},{g},{},{},{},{},{}",
                    r.n, r.min, r.mean, r.std, r.median
                );
            }
        };
        if let Some(t) = &s.accuracy_range {
            range_rows("accuracy", t);
        }
        if let Some(t) = s.confidence.as_ref().and_then(|x| x.median_range.as_ref()) {
            range_rows("median_confidence", t);
        }
        for (k, v) in &s.below_baseline {
            let _ = writeln!(below, "{d},{c},accuracy,{k},{v}");
        }
        if let Some(cs) = &s.confidence {
            for (k, v) in &cs.below_baseline {
                let _ = writeln!(below, "{d},{c},p25_confidence,{k},{v}");
            }
            for st in &cs.stats {
                let _ = writeln!(
                    conf,
                    "{d},{c},{},{},{},{},{},{},{},{},{}",
                    st.surface, st.category, st.n, st.min, st.p25, st.median, st.mean, st.std, st.max
                );
            }
            if let Some(set) = &cs.p25_ecdf {
                write_ecdf_set(dir, &format!("{}_p25_confidence", section_prefix(s)), set)?;
            }
        }
        write_ecdf_set(dir, &format!("{}_accuracy", section_prefix(s)), &s.accuracy_ecdf)?;
    }
    write(dir, "category_table.csv", &cat)?;
    write(dir, "name_audits.csv", &names)?;
    write(dir, "range_tables.csv", &ranges)?;
    write(dir, "below_baseline.csv", &below)?;
    if report.metadata.has_confidence {
        write(dir, "confidence_stats.csv", &conf)?;
    }
    Ok(())
}

/// Side-by-side category accuracies of several reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub models: Vec<String>,
    pub registry_digest: String,
    pub sections: Vec<ComparisonSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSection {
    pub dataset: Dataset,
    pub case_variant: CaseVariant,
    pub rows: Vec<ComparisonRow>,
    /// Per model column: the best and worst demographic category.
    pub column_best: Vec<Option<DemographicCategory>>,
    pub column_worst: Vec<Option<DemographicCategory>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub category: DemographicCategory,
    pub values: Vec<Option<f64>>,
    /// Index of the model with the highest value in this row.
    pub best: Option<usize>,
    pub worst: Option<usize>,
}

fn arg_extreme<I: Iterator<Item = (usize, f64)>>(it: I, max: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in it {
        let better = match best {
            None => true,
            Some((_, b)) => (max && v > b) || (!max && v < b),
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Merges reports into one comparison. Ties resolve to the earlier column
/// or category.
pub fn merge_reports(reports: &[AuditReport]) -> Result<Comparison> {
    let first = reports
        .first()
        .ok_or_else(|| Error::validation("no reports to merge"))?;
    let digest = &first.metadata.registry_digest;
    if let Some(bad) = reports.iter().find(|r| &r.metadata.registry_digest != digest) {
        return Err(Error::validation(format!(
            "registry digest mismatch: {} ({}) vs {} ({})",
            first.metadata.model_name, digest, bad.metadata.model_name, bad.metadata.registry_digest
        )));
    }
    let mut keys: Vec<(Dataset, CaseVariant)> = reports
        .iter()
        .flat_map(|r| r.sections.iter().map(|s| (s.dataset, s.case_variant)))
        .collect();
    keys.sort();
    keys.dedup();
    let sections = keys
        .into_iter()
        .map(|(d, c)| {
            let mut categories: Vec<DemographicCategory> = DemographicCategory::ALL.to_vec();
            let value = |r: &AuditReport, cat: DemographicCategory| -> Option<f64> {
                let s = r.section(d, c)?;
                if cat.is_baseline() {
                    s.baseline.as_ref().map(|b| b.accuracy)
                } else {
                    s.category_table
                        .iter()
                        .find(|row| row.category == cat)
                        .map(|row| row.accuracy)
                }
            };
            categories.retain(|&cat| reports.iter().any(|r| value(r, cat).is_some()));
            let rows: Vec<ComparisonRow> = categories
                .iter()
                .map(|&cat| {
                    let values: Vec<Option<f64>> = reports.iter().map(|r| value(r, cat)).collect();
                    let present = || values.iter().enumerate().filter_map(|(i, v)| v.map(|x| (i, x)));
                    ComparisonRow {
                        category: cat,
                        best: arg_extreme(present(), true),
                        worst: arg_extreme(present(), false),
                        values,
                    }
                })
                .collect();
            let column = |j: usize, max: bool| {
                arg_extreme(
                    rows.iter()
                        .enumerate()
                        .filter(|(_, r)| !r.category.is_baseline())
                        .filter_map(|(i, r)| r.values[j].map(|v| (i, v))),
                    max,
                )
                .map(|i| rows[i].category)
            };
            let column_best = (0..reports.len()).map(|j| column(j, true)).collect();
            let column_worst = (0..reports.len()).map(|j| column(j, false)).collect();
            ComparisonSection {
                dataset: d,
                case_variant: c,
                rows,
                column_best,
                column_worst,
            }
        })
        .collect();
    Ok(Comparison {
        models: reports.iter().map(|r| r.metadata.model_name.clone()).collect(),
        registry_digest: digest.clone(),
        sections,
    })
}

impl Comparison {
    /// `dataset,case_variant,category,<model>...,best,worst` rows; the column
    /// best/worst categories follow as two extra rows per section.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "dataset,case_variant,category,{},row_best,row_worst\n",
            self.models.join(",")
        );
        for s in &self.sections {
            let (d, c) = (s.dataset.as_str(), s.case_variant.as_str());
            for r in &s.rows {
                let vals: Vec<String> = r.values.iter().map(|v| opt(*v)).collect();
                let name = |i: Option<usize>| i.map(|i| self.models[i].clone()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{d},{c},{},{},{},{}",
                    r.category,
                    vals.join(","),
                    name(r.best),
                    name(r.worst)
                );
            }
            for (label, col) in [("column_best", &s.column_best), ("column_worst", &s.column_worst)] {
                let cats: Vec<String> = col
                    .iter()
                    .map(|c| c.map(|c| c.code().to_string()).unwrap_or_default())
                    .collect();
                let _ = writeln!(out, "{d},{c},{label},{},,", cats.join(","));
            }
        }
        out
    }

    /// Plain-text table, `+` marking each column's best category and `-` its worst.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let _ = writeln!(
                out,
                "{} / {}",
                s.dataset.as_str().to_uppercase(),
                s.case_variant.as_str()
            );
            let _ = write!(out, "{:<18}", "category");
            for m in &self.models {
                let _ = write!(out, " {:>12}", truncate(m, 12));
            }
            out.push('\n');
            for r in &s.rows {
                let _ = write!(out, "{:<18}", r.category.display_name());
                for (j, v) in r.values.iter().enumerate() {
                    let mark = if s.column_best[j] == Some(r.category) {
                        "+"
                    } else if s.column_worst[j] == Some(r.category) {
                        "-"
                    } else {
                        " "
                    };
                    let cell = v.map(|x| format!("{x:.4}{mark}")).unwrap_or_else(|| "n/a ".into());
                    let _ = write!(out, " {cell:>12}");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Outcome;

    fn meta(name: &str, digest: &str, conf: bool) -> ReportMetadata {
        ReportMetadata {
            model_name: name.into(),
            backend: "builtin:m.json".into(),
            registry_digest: digest.into(),
            template_digest: None,
            source_digest: None,
            seed: Some(1),
            sample: None,
            weighting: Weighting::UniformNames,
            case_variants: vec![CaseVariant::Original],
            has_confidence: conf,
            tool_version: "test".into(),
        }
    }

    fn outcome(surface: &str, cat: DemographicCategory, o: Outcome, conf: Option<f64>) -> FillOutcome {
        FillOutcome {
            dataset: Dataset::Winogender,
            source_id: "0".into(),
            case_variant: CaseVariant::Original,
            slot: 0,
            position: 0,
            surface: surface.into(),
            category: cat,
            outcome: o,
            per_overlap: false,
            confidence: conf,
        }
    }

    fn outcomes(scale: f64) -> Vec<FillOutcome> {
        use DemographicCategory::*;
        vec![
            outcome("Alya", WF, Outcome::Per, Some(0.9 * scale)),
            outcome("Alya", WF, Outcome::Per, Some(0.8 * scale)),
            outcome("Jana", MF, Outcome::Loc, None),
            outcome("Jana", MF, Outcome::Per, Some(0.4 * scale)),
            outcome("Syedtiastephen", OovBaseline, Outcome::Per, Some(0.5)),
            outcome("Syedtiastephen", OovBaseline, Outcome::None, None),
        ]
    }

    #[test]
    fn sections_are_populated() {
        let r = build_report(meta("a", "d", true), &outcomes(1.0)).unwrap();
        let s = &r.sections[0];
        assert_eq!(s.category_table.len(), 2);
        assert_eq!(s.baseline.as_ref().unwrap().accuracy, 0.5);
        assert_eq!(s.below_baseline[&DemographicCategory::MF], 0.0);
        assert!((s.overall_accuracy - 0.75).abs() < 1e-15);
        let c = s.confidence.as_ref().unwrap();
        assert_eq!(c.stats.len(), 3);
        assert_eq!(c.below_baseline[&DemographicCategory::MF], 1.0);
        assert!(s.accuracy_ecdf.by_gender.contains_key("Female"));
        let back = AuditReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn confidence_sections_are_gated() {
        let r = build_report(meta("a", "d", false), &outcomes(1.0)).unwrap();
        assert!(r.sections[0].confidence.is_none());
        assert!(!r.sections[0].category_table.is_empty());
    }

    #[test]
    fn schema_version_is_checked() {
        assert!(AuditReport::from_json(r#"{"schema_version":99}"#).is_err());
        assert!(AuditReport::from_json("{}").is_err());
    }

    #[test]
    fn merging() {
        let a = build_report(meta("a", "d", true), &outcomes(1.0)).unwrap();
        let mut worse = outcomes(1.0);
        worse[0].outcome = Outcome::None;
        let b = build_report(meta("b", "d", true), &worse).unwrap();
        let one = merge_reports(std::slice::from_ref(&a)).unwrap();
        assert_eq!(one.models, vec!["a"]);
        assert_eq!(one.sections[0].rows.len(), 3);
        let m = merge_reports(&[a.clone(), b]).unwrap();
        let wf = m.sections[0]
            .rows
            .iter()
            .find(|r| r.category == DemographicCategory::WF)
            .unwrap();
        assert_eq!(wf.values, vec![Some(1.0), Some(0.5)]);
        assert_eq!((wf.best, wf.worst), (Some(0), Some(1)));
        assert_eq!(m.sections[0].column_best[0], Some(DemographicCategory::WF));
        assert_eq!(m.sections[0].column_worst[0], Some(DemographicCategory::MF));
        assert!(m.to_csv().starts_with("dataset,case_variant,category,a,b,row_best,row_worst\n"));
        let other = build_report(meta("c", "other", true), &outcomes(1.0)).unwrap();
        assert!(merge_reports(&[a, other]).is_err());
    }
}
