//! Acceptance gate. Prints one line per criterion and exits nonzero if any fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use nerbias::backend::{check_conformance, ExternalBackend, RuleBasedTagger};
use nerbias::conll::{parse_conll, EntitySpan};
use nerbias::crf::{log_likelihood_and_gradient, CrfModel, FeatureConfig, FeatureIndex, LabelSet, LabeledSentence};
use nerbias::embeddings::load_text_vectors;
use nerbias::metrics::{
    below_baseline_fraction, category_accuracy, confidence_stats, ecdf, percentile, std_pop,
    NameAudit, NameConfidences, Weighting,
};
use nerbias::registry::{builtin_registry, deaccent, DemographicCategory, NameEntry, NameRegistry};
use nerbias::report::AuditReport;
use nerbias::templates::{
    expand, expansion_count, insitu_slot, synthesize_insitu, CaseVariant, Dataset, ExpansionMode, Template,
};
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

enum Status {
    Pass,
    Fail,
    Skipped,
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_nerbias"))
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "nerbias {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn names(n: usize) -> Vec<NameEntry> {
    (0..n)
        .map(|i| NameEntry::new(format!("Name{i}"), DemographicCategory::DEMOGRAPHIC[i % 8]).unwrap())
        .collect()
}

fn combinatorics() -> Check {
    let t = Template::parse("0", "{0} told {1} that {2} could pay with cash.").map_err(|e| e.to_string())?;
    let started = Instant::now();
    let mut detail = Vec::new();
    for n in [3usize, 5, 10] {
        let ns = names(n);
        let sentences: Vec<Vec<String>> = expand(std::slice::from_ref(&t), &ns, ExpansionMode::Exhaustive)
            .map_err(|e| e.to_string())?
            .map(|s| s.tokens)
            .collect();
        let distinct: BTreeSet<&Vec<String>> = sentences.iter().collect();
        let want = n * (n - 1) * (n - 2);
        ensure(sentences.len() == want && distinct.len() == want, format!("n={n}: {} sentences, {} distinct, want {want}", sentences.len(), distinct.len()))?;
        detail.push(format!("n={n}:{want}"));
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    let at123 = expansion_count(123, std::slice::from_ref(&t)).map_err(|e| e.to_string())?;
    ensure(at123 == 1_815_726, format!("n=123 gives {at123}"))?;
    ensure(at123 == 6 * (123 * 122 * 121 / 6), "3!·C(123,3) mismatch")?;
    let many = vec![t.clone(); 120];
    let total = expansion_count(123, &many).map_err(|e| e.to_string())?;
    ensure(total == 217_887_120, format!("120 templates give {total}"))?;
    Ok(format!("{} distinct, n=123 -> {at123}, 120 templates -> {total}, {elapsed:.0?}", detail.join(" ")))
}

fn insitu_filter() -> Check {
    let started = Instant::now();
    let text = fs::read_to_string(fixture("insitu12.conll")).map_err(|e| e.to_string())?;
    let corpus = parse_conll(text.as_bytes()).map_err(|e| e.to_string())?;
    ensure(corpus.len() == 12, format!("fixture has {} sentences", corpus.len()))?;
    let selected: Vec<usize> = (0..corpus.len()).filter(|&i| insitu_slot(&corpus[i]).is_some()).collect();
    ensure(selected == vec![0, 5, 7, 8, 11], format!("selected {selected:?}"))?;
    let reg = builtin_registry();
    let ns = reg.names_with_baseline();
    let generated: Vec<_> = synthesize_insitu(&corpus, &ns).collect();
    ensure(generated.len() == selected.len() * ns.len(), format!("{} generated", generated.len()))?;
    for g in &generated {
        let src = &corpus[g.provenance.source_id.parse::<usize>().map_err(|e| e.to_string())?];
        let fill = &g.provenance.fills[0];
        let words = src.words();
        ensure(words.len() == g.tokens.len(), "length changed")?;
        for (i, (a, b)) in words.iter().zip(&g.tokens).enumerate() {
            if i == fill.position {
                ensure(b == &fill.entry.surface, format!("slot holds {b}"))?;
                ensure(src.tags()[i] == "B-PER", "slot was not the PER token")?;
            } else {
                ensure(a == b, format!("token {i} changed: {a} -> {b}"))?;
            }
        }
        ensure(g.tags == src.tags(), "gold tags changed")?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("sentences {selected:?} selected, {} substitutions verified, {elapsed:.0?}", generated.len()))
}

fn crf_suite() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_grad: f64 = 0.0;
    for i in 0..120 {
        let (mut m, toks) = random_instance(&mut rng, 5, 4);
        if i % 2 == 1 {
            let w = m.weights().to_vec();
            m = CrfModel::new(m.label_set().clone(), m.feature_config().clone(), m.features().clone(), w, 0.05)
                .map_err(|e| e.to_string())?;
        }
        let tags = random_legal_tags(&mut rng, &m, toks.len());
        let batch = vec![LabeledSentence { tokens: toks, tags }];
        let (_, g) = log_likelihood_and_gradient(&m, &batch).map_err(|e| e.to_string())?;
        worst_grad = worst_grad.max(relative_error(&g, &finite_difference_gradient(&m, &batch, 1e-5)));
    }
    ensure(worst_grad < 1e-4, format!("(a) gradient rel err {worst_grad:e}"))?;

    let (mut worst_z, mut worst_conf): (f64, f64) = (0.0, 0.0);
    let mut spans = 0;
    for _ in 0..100 {
        let (m, toks) = random_instance(&mut rng, 4, 3);
        let dp = m.log_partition(&toks);
        let bf = brute_log_partition(&m, &toks);
        worst_z = worst_z.max(((dp - bf) / bf.abs().max(1e-300)).abs());
        ensure(m.viterbi(&toks) == brute_argmax(&m, &toks), "(c) Viterbi differs from exhaustive argmax")?;
        for start in 0..toks.len() {
            for end in start + 1..=toks.len() {
                let span = EntitySpan::new(start, end, "PER");
                let c = m.entity_confidence(&toks, &span).map_err(|e| e.to_string())?;
                worst_conf = worst_conf.max((c - brute_span_posterior(&m, &toks, &span)).abs());
                spans += 1;
            }
        }
    }
    ensure(worst_z < 1e-8, format!("(b) log Z rel err {worst_z:e}"))?;
    ensure(worst_conf < 1e-8, format!("(d) confidence err {worst_conf:e}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!(
        "(a) grad {worst_grad:.1e} over 120, (b) logZ {worst_z:.1e} over 100, (c) argmax ok, (d) conf {worst_conf:.1e} over {spans} spans, {elapsed:.1?}"
    ))
}

fn confidence_sanity() -> Check {
    let labels = LabelSet::new(["O", "B-PER"]).map_err(|e| e.to_string())?;
    let features = FeatureIndex::from_names(vec!["bias".into()]).map_err(|e| e.to_string())?;
    let m = CrfModel::zeros(labels, FeatureConfig::default(), features, 0.0).map_err(|e| e.to_string())?;
    let c = m
        .entity_confidence(&toks(&["Alya", "left"]), &EntitySpan::new(0, 1, "PER"))
        .map_err(|e| e.to_string())?;
    ensure(c == 0.5, format!("confidence {c}"))?;
    Ok(format!("confidence {c}"))
}

fn audit_of(surface: &str, cat: DemographicCategory, n_total: u64, n_person: u64) -> NameAudit {
    NameAudit {
        surface: surface.into(),
        category: cat,
        dataset: Dataset::Winogender,
        case_variant: CaseVariant::Original,
        n_total,
        n_person,
        accuracy: n_person as f64 / n_total as f64,
        label_distribution: Default::default(),
        n_per_overlap: 0,
    }
}

fn metrics_oracle() -> Check {
    use DemographicCategory::*;
    let audits = [
        audit_of("a", BF, 10, 10),
        audit_of("b", BF, 30, 15),
        audit_of("c", WM, 4, 1),
        audit_of("d", WM, 4, 2),
        audit_of("e", WM, 8, 8),
    ];
    let cats = category_accuracy(&audits, Weighting::UniformNames);
    let hand = [(BF, (1.0 + 0.5) / 2.0), (WM, (0.25 + 0.5 + 1.0) / 3.0)];
    for (c, want) in hand {
        let got = cats.iter().find(|x| x.category == c).map(|x| x.accuracy).ok_or("missing category")?;
        ensure((got - want).abs() < 1e-15, format!("{c}: {got} vs {want}"))?;
    }
    let inst = category_accuracy(&audits, Weighting::InstanceWeighted);
    ensure((inst[0].accuracy - 0.625).abs() < 1e-15, "instance weighting")?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let values: Vec<f64> = (0..100).map(|_| (rng.gen_range(0..40) as f64) / 40.0).collect();
    let curve = ecdf(&values).map_err(|e| e.to_string())?;
    for q in 0..1000 {
        let x = if q % 10 == 0 { values[q % values.len()] } else { rng.gen_range(-0.1..1.1) };
        let count = values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64;
        ensure(curve.eval(x) == count, format!("ECDF at {x}: {} vs {count}", curve.eval(x)))?;
        let below = values.iter().filter(|&&v| v < x).count() as f64 / values.len() as f64;
        ensure(below_baseline_fraction(&values, x) == below, "below-baseline count")?;
    }

    let mut worst: f64 = 0.0;
    for round in 0..20 {
        let n = 1000 + round;
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        for q in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0] {
            // Order statistics at rank q·(n−1), interpolated by hand.
            let rank = q * (n - 1) as f64;
            let (lo, frac) = (rank.floor() as usize, rank - rank.floor());
            let want = if frac == 0.0 { sorted[lo] } else { sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac };
            worst = worst.max((percentile(&sorted, q) - want).abs());
        }
        let m = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        worst = worst.max((std_pop(&xs) - var.sqrt()).abs());
        let named = NameConfidences {
            surface: "x".into(),
            category: BF,
            dataset: Dataset::Winogender,
            case_variant: CaseVariant::Original,
            values: xs.clone(),
        };
        let (stats, _) = confidence_stats(&[named]).map_err(|e| e.to_string())?;
        let s = &stats[0];
        let mid = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        worst = worst.max((s.median - mid).abs()).max((s.min - sorted[0]).abs());
    }
    ensure(worst < 1e-12, format!("percentile/std error {worst:e}"))?;
    Ok(format!("uniform means exact, ECDF exact at 1000 queries, percentile/std err {worst:.1e}"))
}

const A_NAMES: [(&str, &str); 4] = [("Emily", "WF"), ("Megan", "WF"), ("Frank", "WM"), ("Greg", "WM")];
const B_NAMES: [(&str, &str); 4] = [("Latoya", "BF"), ("Tanisha", "BF"), ("Darnell", "BM"), ("Tyree", "BM")];
const FILLERS: [&str; 20] = [
    "Corvin", "Dalmar", "Ennis", "Falko", "Garret", "Hollis", "Ivor", "Jarek", "Kellan", "Lorcan", "Marek",
    "Nevin", "Orrin", "Perrin", "Quill", "Rowan", "Soren", "Tobin", "Ulric", "Varek",
];
const PLACES: [&str; 10] = ["Lisbon", "Oslo", "Nairobi", "Quito", "Hanoi", "Perth", "Dakar", "Riga", "Tunis", "Cusco"];
const ORGS: [&str; 6] = ["Reuters", "Fiat", "Unilever", "Siemens", "Nestle", "Boeing"];
const CONTEXTS: [&str; 6] = [
    "{X} told reporters that {X} would stay .",
    "{X} said {X} could not attend the dinner .",
    "on Monday {X} thanked {X} for the help .",
    "{X} and {X} signed the agreement .",
    "officials from {X} met {X} on Tuesday .",
    "{X} expects {X} to report higher profits .",
];
const O_SENTENCES: [&str; 4] = [
    "the market closed higher on Friday .",
    "shares fell after the report .",
    "the committee will meet again next week .",
    "it was a quiet day .",
];

fn fill_context(template: &str, fills: &[(&str, &str)]) -> String {
    let mut it = fills.iter();
    let mut lines = String::new();
    for tok in template.split_whitespace() {
        if tok == "{X}" {
            let (word, label) = it.next().expect("enough fills");
            lines.push_str(&format!("{word} NNP O B-{label}\n"));
        } else {
            lines.push_str(&format!("{tok} XX O O\n"));
        }
    }
    lines.push('\n');
    lines
}

/// Category-A names occur as PER ten times as often as category-B names,
/// which also occur as locations. Mentions of every type share contexts.
fn planted_training_corpus(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mentions: Vec<(&str, &str)> = Vec::new();
    let mut add = |word: &'static str, label: &'static str, n: usize| {
        mentions.extend(std::iter::repeat_n((word, label), n));
    };
    for (n, _) in A_NAMES {
        add(n, "PER", 20);
    }
    for (n, _) in B_NAMES {
        add(n, "PER", 2);
        add(n, "LOC", 4);
    }
    for n in FILLERS {
        add(n, "PER", 3);
    }
    for p in PLACES {
        add(p, "LOC", 6);
    }
    for o in ORGS {
        add(o, "ORG", 6);
    }
    mentions.shuffle(&mut rng);
    let mut sentences = Vec::new();
    for (i, pair) in mentions.chunks(2).enumerate() {
        let ctx = CONTEXTS[i % CONTEXTS.len()];
        if pair.len() == 2 && pair[0].0 != pair[1].0 {
            sentences.push(fill_context(ctx, pair));
        }
    }
    for i in 0..20 {
        sentences.push(fill_context(O_SENTENCES[i % O_SENTENCES.len()], &[]));
    }
    sentences.shuffle(&mut rng);
    let mut out = String::from("-DOCSTART- -X- -X- O\n\n");
    for s in sentences {
        out.push_str(&s);
    }
    out
}

const AUDIT_TEMPLATES: &str = "{0} told {1} that {2} could pay with cash.\n{0} asked {1} whether {2} had signed the lease.\n";

struct PlantedRun {
    dir: tempfile::TempDir,
}

impl PlantedRun {
    fn setup() -> Result<Self, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let p = dir.path();
        fs::write(p.join("train.conll"), planted_training_corpus(7)).map_err(|e| e.to_string())?;
        let mut reg = String::new();
        for (n, c) in A_NAMES.iter().chain(&B_NAMES) {
            reg.push_str(&format!("{n},{c}\n"));
        }
        reg.push_str("Syedtiastephen,OOV\n");
        fs::write(p.join("registry.txt"), reg).map_err(|e| e.to_string())?;
        fs::write(p.join("templates.txt"), AUDIT_TEMPLATES).map_err(|e| e.to_string())?;
        run_cli(&[
            "train",
            "--conll",
            &p.join("train.conll").to_string_lossy(),
            "--seed",
            "11",
            "--out",
            &p.join("model").to_string_lossy(),
        ])?;
        Ok(PlantedRun { dir })
    }

    fn audit(&self, out: &str, lowercase: &str) -> Result<AuditReport, String> {
        let p = self.dir.path();
        run_cli(&[
            "audit",
            "--registry",
            &p.join("registry.txt").to_string_lossy(),
            "--templates",
            &p.join("templates.txt").to_string_lossy(),
            "--backend",
            &format!("builtin:{}", p.join("model/model.json").display()),
            "--lowercase",
            lowercase,
            "--seed",
            "11",
            "--out",
            &p.join(out).to_string_lossy(),
        ])?;
        AuditReport::load(&p.join(out).join("report.json")).map_err(|e| e.to_string())
    }
}

fn group_mean(report: &AuditReport, case: CaseVariant, codes: &[&str]) -> Result<(f64, f64), String> {
    let s = report.section(Dataset::Winogender, case).ok_or("missing section")?;
    let accs: Vec<f64> = s
        .name_audits
        .iter()
        .filter(|a| codes.contains(&a.category.code()))
        .map(|a| a.accuracy)
        .collect();
    let baseline = s.baseline.as_ref().ok_or("missing OOV row")?.accuracy;
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    Ok((mean, below_baseline_fraction(&accs, baseline)))
}

fn planted_bias(run: &PlantedRun) -> Check {
    let started = Instant::now();
    let report = run.audit("audit", "off")?;
    let (a, a_below) = group_mean(&report, CaseVariant::Original, &["WF", "WM"])?;
    let (b, b_below) = group_mean(&report, CaseVariant::Original, &["BF", "BM"])?;
    let table = &report.section(Dataset::Winogender, CaseVariant::Original).ok_or("missing section")?.category_table;
    ensure(table.len() == 4, "category table rows")?;
    ensure(a - b >= 0.10, format!("A {a:.4} vs B {b:.4}"))?;
    ensure(b_below > a_below, format!("below-baseline A {a_below} vs B {b_below}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(120), format!("took {elapsed:?}"))?;
    Ok(format!(
        "A {a:.4} vs B {b:.4} (gap {:.4}); below OOV baseline A {a_below:.2} vs B {b_below:.2}",
        a - b
    ))
}

fn case_ablation(run: &PlantedRun) -> Check {
    let original = run.audit("audit", "off")?;
    let lower = run.audit("audit_lower", "on")?;
    let o = original.section(Dataset::Winogender, CaseVariant::Original).ok_or("missing original")?.overall_accuracy;
    let l = lower.section(Dataset::Winogender, CaseVariant::Lower).ok_or("missing lower")?.overall_accuracy;
    ensure(l < o, format!("lower {l:.4} is not below original {o:.4}"))?;
    Ok(format!("overall accuracy original {o:.4} > lower-cased {l:.4}"))
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(run: &PlantedRun) -> Check {
    run.audit("det_a", "both")?;
    run.audit("det_b", "both")?;
    let a = read_tree(&run.dir.path().join("det_a"));
    let b = read_tree(&run.dir.path().join("det_b"));
    ensure(!a.is_empty(), "no report files")?;
    ensure(a.len() == b.len(), "different file sets")?;
    for ((pa, ca), (pb, cb)) in a.iter().zip(&b) {
        ensure(pa == pb, format!("{} vs {}", pa.display(), pb.display()))?;
        ensure(ca == cb, format!("{} differs", pa.display()))?;
    }
    Ok(format!("{} report files byte-identical across two runs", a.len()))
}

fn glove_like_fixture(dir: &Path, registry: &NameRegistry) -> Result<PathBuf, String> {
    let missing = ["Nishelle", "Rishaan", "Zikri"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut text = String::new();
    let words = registry
        .entries()
        .iter()
        .filter(|e| !missing.contains(&e.surface.as_str()))
        .map(|e| deaccent(&e.surface).to_lowercase())
        .chain(["the", "told", ",", "."].map(String::from));
    for w in words {
        let v: Vec<String> = (0..8).map(|_| format!("{:.4}", rng.gen_range(-1.0..1.0))).collect();
        text.push_str(&format!("{w} {}\n", v.join(" ")));
    }
    let path = dir.join("vectors.txt");
    fs::write(&path, text).map_err(|e| e.to_string())?;
    Ok(path)
}

fn oov_line(stdout: &str) -> Result<BTreeSet<String>, String> {
    let line = stdout
        .lines()
        .find(|l| l.starts_with("embedding OOV names"))
        .ok_or("no OOV report printed")?;
    let list = line.split_once(": ").ok_or("malformed OOV line")?.1;
    Ok(list
        .split(", ")
        .filter(|s| *s != "none")
        .map(|s| s.split(' ').next().unwrap_or("").to_string())
        .collect())
}

fn reproduction() -> (Status, String) {
    let expected: BTreeSet<String> = ["Nishelle", "Rishaan", "Zikri"].map(String::from).into();
    // The synthetic vocabulary check always runs.
    let fixture = (|| -> Result<String, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let reg = builtin_registry();
        let vectors = glove_like_fixture(dir.path(), &reg)?;
        let store = load_text_vectors(fs::read(&vectors).map_err(|e| e.to_string())?.as_slice(), None)
            .map_err(|e| e.to_string())?;
        let oov: BTreeSet<String> = store.oov_report(&reg).into_iter().map(|(s, _)| s).collect();
        ensure(oov == expected, format!("OOV report {oov:?}"))?;
        Ok("synthetic vocabulary OOV report = {Nishelle, Rishaan, Zikri}".to_string())
    })();
    let fixture = match fixture {
        Ok(s) => s,
        Err(e) => return (Status::Fail, e),
    };
    let (Ok(train), Ok(test), Ok(glove)) = (
        std::env::var("NERBIAS_CONLL_TRAIN"),
        std::env::var("NERBIAS_CONLL_TEST"),
        std::env::var("NERBIAS_GLOVE"),
    ) else {
        return (
            Status::Skipped,
            format!("{fixture}; set NERBIAS_CONLL_TRAIN, NERBIAS_CONLL_TEST and NERBIAS_GLOVE for the full run"),
        );
    };
    let result = (|| -> Result<String, String> {
        let out = std::env::var("NERBIAS_REPRO_OUT").map(PathBuf::from).unwrap_or_else(|_| std::env::temp_dir().join("nerbias-repro"));
        let model_dir = out.join("model");
        let stdout = run_cli(&[
            "train", "--conll", &train, "--embeddings", &glove, "--seed", "0", "--out", &model_dir.to_string_lossy(),
        ])?;
        let oov = oov_line(&stdout)?;
        ensure(oov == expected, format!("OOV report {oov:?}"))?;
        let audit_dir = out.join("audit");
        run_cli(&[
            "audit", "--dataset", "both", "--conll", &test, "--sample", "20000", "--seed", "0",
            "--backend", &format!("builtin:{}", model_dir.join("model.json").display()),
            "--workers", "4", "--out", &audit_dir.to_string_lossy(),
        ])?;
        let report = AuditReport::load(&audit_dir.join("report.json")).map_err(|e| e.to_string())?;
        for s in &report.sections {
            ensure(s.category_table.len() == 8 && s.baseline.is_some(), "report lacks the eight category rows or the baseline row")?;
        }
        Ok(format!("trained, audited and wrote {}; OOV report matches", audit_dir.display()))
    })();
    match result {
        Ok(s) => (Status::Pass, format!("{fixture}; {s}")),
        Err(e) => (Status::Fail, e),
    }
}

fn protocol_stub() -> Check {
    let mut b = ExternalBackend::in_process(RuleBasedTagger, Duration::from_secs(5)).map_err(|e| e.to_string())?;
    let r = check_conformance(&mut b, 1000, 3).map_err(|e| e.to_string())?;
    ensure(r.passed(), format!("{:?}", r.violations))?;
    ensure(r.entities_on_lowercase == 0, "entities on lower-cased input")?;
    Ok(format!("{} requests, ids/lengths/IOB2 valid, 0 entities on lower-cased input", r.responses))
}

fn guarded(f: impl FnOnce() -> Check) -> (Status, String) {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => (Status::Pass, s),
        Ok(Err(s)) => (Status::Fail, s),
        Err(_) => (Status::Fail, "panicked".into()),
    }
}

fn main() {
    let run = PlantedRun::setup();
    let with_run = |f: fn(&PlantedRun) -> Check| -> (Status, String) {
        match &run {
            Ok(r) => guarded(|| f(r)),
            Err(e) => (Status::Fail, format!("training failed: {e}")),
        }
    };
    let results: Vec<(&str, (Status, String))> = vec![
        ("combinatorics", guarded(combinatorics)),
        ("in-situ filter", guarded(insitu_filter)),
        ("CRF numerical suite", guarded(crf_suite)),
        ("confidence sanity", guarded(confidence_sanity)),
        ("metrics oracle", guarded(metrics_oracle)),
        ("planted-bias end-to-end", with_run(planted_bias)),
        ("case ablation", with_run(case_ablation)),
        ("determinism", with_run(determinism)),
        ("reproduction mode", reproduction()),
        ("protocol conformance (in-process stub)", guarded(protocol_stub)),
    ];
    let mut failed = 0;
    println!();
    for (name, (status, detail)) in &results {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skipped => "SKIP",
        };
        println!("{tag}  {name}: {detail}");
    }
    println!("\nacceptance: {} criteria, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
