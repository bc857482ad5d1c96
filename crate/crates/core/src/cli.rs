//! Command-line interface.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::backend::{
    self, check_conformance, serve, Backend, BackendDescriptor, BackendKind, EchoTagger,
    RuleBasedTagger, TagResponse,
};
use crate::conll::{parse_conll, write_conll, ConllSentence};
use crate::crf::{train, EmbeddingSource, FeatureConfig, LabeledSentence, TrainConfig};
use crate::embeddings::{load_text_vectors, EmbeddingStore};
use crate::error::{Error, Result};
use crate::metrics::Weighting;
use crate::pipeline::{read_corpus, tag_and_score, CorpusWriter};
use crate::registry::{builtin_registry, load_registry, NameEntry, NameRegistry};
use crate::report::{build_report, merge_reports, write_report_files, AuditReport, ReportMetadata};
use crate::templates::{
    builtin_templates, expand, lowercase_variant, load_templates, synthesize_insitu,
    templates_digest, CaseVariant, Dataset, ExpansionMode, GeneratedSentence, Template,
    TemplateRules,
};

#[derive(Debug, Parser)]
#[command(name = "nerbias", version, about = "Audit NER taggers for demographic bias in person-name recognition")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic evaluation corpora with provenance sidecars.
    Generate(GenerateArgs),
    /// Train the built-in CRF tagger on a CoNLL file.
    Train(TrainArgs),
    /// Tag a CoNLL file with a backend.
    Tag(TagArgs),
    /// Generate or read a corpus, tag it and write an audit report.
    Audit(AuditArgs),
    /// Merge audit reports into a side-by-side comparison.
    Report(ReportArgs),
    /// Drive a backend with randomized protocol requests.
    Conformance(ConformanceArgs),
    /// Serve a built-in stub tagger over the JSON-lines protocol.
    #[command(hide = true)]
    StubServer(StubArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetChoice {
    Winogender,
    Insitu,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LowercaseChoice {
    Off,
    On,
    Both,
}

impl LowercaseChoice {
    fn variants(self) -> Vec<CaseVariant> {
        match self {
            LowercaseChoice::Off => vec![CaseVariant::Original],
            LowercaseChoice::On => vec![CaseVariant::Lower],
            LowercaseChoice::Both => vec![CaseVariant::Original, CaseVariant::Lower],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingChoice {
    Uniform,
    Instance,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    #[arg(long, value_enum, default_value = "winogender")]
    pub dataset: DatasetChoice,
    /// Name registry (`surface,category` lines). Defaults to the built-in lists.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Template file, one template per line with `{0}`-style slots.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Accept templates with fewer than three slots.
    #[arg(long)]
    pub lenient_templates: bool,
    /// CoNLL source for in-situ substitution.
    #[arg(long)]
    pub conll: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw this many sentences per dataset instead of the full expansion.
    #[arg(long)]
    pub sample: Option<u64>,
    #[arg(long, value_enum, default_value = "off")]
    pub lowercase: LowercaseChoice,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// `builtin:<model>`, `proc:<command>` or `tcp:<host:port>`.
    #[arg(long)]
    pub backend: String,
    #[arg(long, default_value_t = backend::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    /// Parallel tagging workers (threads or connections).
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data in CoNLL format.
    #[arg(long)]
    pub conll: PathBuf,
    /// Text-format word vectors used as real-valued features.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Registry checked against the embedding vocabulary.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Embedding features only.
    #[arg(long)]
    pub no_lexical: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Output directory for `model.json` and `training_log.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub conll: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Pre-generated corpus files (with sidecars) to audit instead of generating.
    #[arg(long = "corpus")]
    pub corpus_files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "uniform")]
    pub weighting: WeightingChoice,
    /// Model column name used in comparisons.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report files or audit output directories.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConformanceArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 1000)]
    pub requests: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StubTagger {
    Rulebased,
    Echo,
}

#[derive(Debug, Args)]
pub struct StubArgs {
    #[arg(long, value_enum, default_value = "rulebased")]
    pub tagger: StubTagger,
    /// Listen on this TCP port instead of using stdin/stdout.
    #[arg(long)]
    pub tcp: Option<u16>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Tag(a) => cmd_tag(&a),
        Command::Audit(a) => cmd_audit(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Conformance(a) => cmd_conformance(&a),
        Command::StubServer(a) => cmd_stub_server(&a),
    }
}

fn open_file(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::from(e).in_file(path))
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn read_conll(path: &Path) -> Result<Vec<ConllSentence>> {
    parse_conll(open_file(path)?).map_err(|e| e.in_file(path))
}

fn load_registry_arg(path: Option<&Path>) -> Result<NameRegistry> {
    match path {
        Some(p) => load_registry(open_file(p)?).map_err(|e| e.in_file(p)),
        None => Ok(builtin_registry()),
    }
}

/// Everything needed to regenerate the requested corpora.
struct CorpusPlan {
    registry: NameRegistry,
    names: Vec<NameEntry>,
    templates: Vec<Template>,
    insitu_source: Option<Vec<ConllSentence>>,
    source_digest: Option<String>,
    datasets: Vec<Dataset>,
    variants: Vec<CaseVariant>,
    seed: Option<u64>,
    sample: Option<u64>,
}

type SentenceStream<'a> = Box<dyn Iterator<Item = GeneratedSentence> + 'a>;

impl CorpusPlan {
    fn from_args(a: &CorpusArgs) -> Result<Self> {
        if a.sample.is_some() && a.seed.is_none() {
            return Err(Error::validation("--sample requires --seed"));
        }
        if a.sample == Some(0) {
            return Err(Error::validation("--sample must be positive"));
        }
        let registry = load_registry_arg(a.registry.as_deref())?;
        let names = registry.names_with_baseline();
        let datasets = match a.dataset {
            DatasetChoice::Winogender => vec![Dataset::Winogender],
            DatasetChoice::Insitu => vec![Dataset::Insitu],
            DatasetChoice::Both => vec![Dataset::Winogender, Dataset::Insitu],
        };
        let rules = if a.lenient_templates {
            TemplateRules::LENIENT
        } else {
            TemplateRules::WINOGENDER
        };
        let templates = match &a.templates {
            Some(p) => load_templates(open_file(p)?, rules).map_err(|e| e.in_file(p))?,
            None => builtin_templates(),
        };
        let (insitu_source, source_digest) = if datasets.contains(&Dataset::Insitu) {
            let path = a
                .conll
                .as_ref()
                .ok_or_else(|| Error::validation("in-situ generation needs --conll"))?;
            (Some(read_conll(path)?), Some(file_digest(path)?))
        } else {
            (None, None)
        };
        Ok(CorpusPlan {
            registry,
            names,
            templates,
            insitu_source,
            source_digest,
            datasets,
            variants: a.lowercase.variants(),
            seed: a.seed,
            sample: a.sample,
        })
    }

    fn stream(&self, dataset: Dataset, variant: CaseVariant) -> Result<SentenceStream<'_>> {
        let base: SentenceStream<'_> = match dataset {
            Dataset::Winogender => {
                let mode = match (self.sample, self.seed) {
                    (Some(count), Some(seed)) => ExpansionMode::Sample {
                        seed,
                        count: count as usize,
                    },
                    _ => ExpansionMode::Exhaustive,
                };
                expand(&self.templates, &self.names, mode)?
            }
            Dataset::Insitu => {
                let source = self.insitu_source.as_deref().expect("loaded for in-situ");
                let all: Vec<GeneratedSentence> = synthesize_insitu(source, &self.names).collect();
                match (self.sample, self.seed) {
                    (Some(count), Some(seed)) => {
                        let count = count as usize;
                        if count > all.len() {
                            return Err(Error::validation(format!(
                                "--sample {count} exceeds the {} in-situ sentences",
                                all.len()
                            )));
                        }
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let mut idx = rand::seq::index::sample(&mut rng, all.len(), count).into_vec();
                        idx.sort_unstable();
                        Box::new(idx.into_iter().map(move |i| all[i].clone()))
                    }
                    _ => Box::new(all.into_iter()),
                }
            }
        };
        Ok(match variant {
            CaseVariant::Original => base,
            CaseVariant::Lower => Box::new(lowercase_variant(base)),
        })
    }

    fn sections(&self) -> Vec<(Dataset, CaseVariant)> {
        self.datasets
            .iter()
            .flat_map(|&d| self.variants.iter().map(move |&v| (d, v)))
            .collect()
    }

    fn template_digest(&self) -> Option<String> {
        self.datasets
            .contains(&Dataset::Winogender)
            .then(|| templates_digest(&self.templates))
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let plan = CorpusPlan::from_args(&a.corpus)?;
    let mut total = 0;
    for (d, v) in plan.sections() {
        let path = a.out.join(format!("{}_{}.conll", d.as_str(), v.as_str()));
        let mut w = CorpusWriter::create(&path)?;
        for s in plan.stream(d, v)? {
            w.write(&s)?;
        }
        let n = w.finish()?;
        println!("{}: {n} sentences", path.display());
        total += n;
    }
    println!("total: {total} sentences");
    Ok(())
}

fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    load_text_vectors(open_file(path)?, None).map_err(|e| e.in_file(path))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let corpus: Vec<LabeledSentence> = read_conll(&a.conll)?
        .iter()
        .filter(|s| !s.is_empty())
        .map(LabeledSentence::from)
        .collect();
    let store = match &a.embeddings {
        Some(p) => Some(Arc::new(load_embeddings(p)?)),
        None => None,
    };
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        features: FeatureConfig {
            lexical: !a.no_lexical,
            embeddings: match (&a.embeddings, &store) {
                (Some(p), Some(s)) => Some(EmbeddingSource {
                    path: Some(fs::canonicalize(p).unwrap_or_else(|_| p.clone())),
                    dimension: s.dimension(),
                }),
                _ => None,
            },
            ..FeatureConfig::default()
        },
        l2_strength: a.l2.unwrap_or(defaults.l2_strength),
        learning_rate: a.learning_rate.unwrap_or(defaults.learning_rate),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        seed: a.seed,
        ..defaults
    };
    if let Some(store) = &store {
        let registry = load_registry_arg(a.registry.as_deref())?;
        let oov = store.oov_report(&registry);
        let listed: Vec<String> = oov.iter().map(|(s, c)| format!("{s} ({c})")).collect();
        println!(
            "embedding OOV names ({}): {}",
            oov.len(),
            if listed.is_empty() { "none".to_string() } else { listed.join(", ") }
        );
    }
    let model = train(&config, &corpus, store)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::from(e).in_file(&a.out))?;
    let model_path = a.out.join("model.json");
    model.save(&model_path)?;
    if let Some(summary) = model.training_summary() {
        let log_path = a.out.join("training_log.json");
        let mut text = serde_json::to_string_pretty(summary)?;
        text.push('\n');
        fs::write(&log_path, text).map_err(|e| Error::from(e).in_file(&log_path))?;
        println!(
            "trained on {} sentences ({} held out), objective {:.6} -> {:.6}, best epoch {}",
            summary.n_train,
            summary.n_heldout,
            summary.initial_objective,
            summary.final_objective,
            summary.best_epoch
        );
    }
    println!("model written to {}", model_path.display());
    Ok(())
}

fn descriptor(a: &BackendArgs) -> Result<BackendDescriptor> {
    let d = a
        .backend
        .parse::<BackendDescriptor>()?
        .with_batch_size(a.batch_size)
        .with_timeout(Duration::from_millis(a.timeout_ms));
    d.validate()?;
    if a.workers == 0 {
        return Err(Error::validation("--workers must be at least 1"));
    }
    Ok(d)
}

/// One connection per worker for external backends; one shared model with a
/// sized thread pool for the built-in one.
fn open_backends(d: &BackendDescriptor, workers: usize) -> Result<Vec<Box<dyn Backend>>> {
    if d.kind == BackendKind::BuiltinCrf {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
        return Ok(vec![backend::open(d)?]);
    }
    (0..workers).map(|_| backend::open(d)).collect()
}

fn cmd_tag(a: &TagArgs) -> Result<()> {
    let d = descriptor(&a.backend)?;
    let mut backends = open_backends(&d, a.backend.workers)?;
    backends[0].capabilities()?;
    let corpus: Vec<ConllSentence> = read_conll(&a.conll)?
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    let tokens: Vec<Vec<String>> = corpus.iter().map(ConllSentence::words).collect();
    let responses = backend::tag_all(&mut backends, &tokens, d.batch_size)?;
    let tagged: Vec<ConllSentence> = corpus
        .iter()
        .zip(&responses)
        .map(|(s, r)| {
            let mut s = s.clone();
            for (t, tag) in s.tokens.iter_mut().zip(&r.tags) {
                t.ner_tag = tag.clone();
            }
            s
        })
        .collect();
    fs::create_dir_all(&a.out).map_err(|e| Error::from(e).in_file(&a.out))?;
    let pred = a.out.join("predictions.conll");
    fs::write(&pred, write_conll(&tagged)).map_err(|e| Error::from(e).in_file(&pred))?;
    let resp_path = a.out.join("responses.jsonl");
    let mut lines = String::new();
    for r in &responses {
        lines.push_str(&serde_json::to_string::<TagResponse>(r)?);
        lines.push('\n');
    }
    fs::write(&resp_path, lines).map_err(|e| Error::from(e).in_file(&resp_path))?;
    println!("tagged {} sentences into {}", responses.len(), pred.display());
    Ok(())
}

fn model_name(d: &BackendDescriptor) -> String {
    match d.kind {
        BackendKind::BuiltinCrf => Path::new(&d.locator)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| d.locator.clone()),
        _ => d.to_string(),
    }
}

fn cmd_audit(a: &AuditArgs) -> Result<()> {
    let d = descriptor(&a.backend)?;
    let plan = CorpusPlan::from_args(&a.corpus)?;
    let mut backends = open_backends(&d, a.backend.workers)?;
    let caps = backends[0].capabilities()?;
    for b in backends.iter_mut().skip(1) {
        b.capabilities()?;
    }
    let chunk = 4096.max(d.batch_size * backends.len());
    let outcomes = if a.corpus_files.is_empty() {
        let mut out = Vec::new();
        for (ds, v) in plan.sections() {
            out.extend(tag_and_score(&mut backends, plan.stream(ds, v)?, d.batch_size, chunk)?);
        }
        out
    } else {
        let mut out = Vec::new();
        for path in &a.corpus_files {
            out.extend(tag_and_score(&mut backends, read_corpus(path)?, d.batch_size, chunk)?);
        }
        out
    };
    let mut variants: Vec<CaseVariant> = outcomes.iter().map(|o| o.case_variant).collect();
    variants.sort();
    variants.dedup();
    let metadata = ReportMetadata {
        model_name: a.name.clone().unwrap_or_else(|| model_name(&d)),
        backend: d.to_string(),
        registry_digest: plan.registry.digest(),
        template_digest: plan.template_digest(),
        source_digest: plan.source_digest.clone(),
        seed: plan.seed,
        sample: plan.sample,
        weighting: match a.weighting {
            WeightingChoice::Uniform => Weighting::UniformNames,
            WeightingChoice::Instance => Weighting::InstanceWeighted,
        },
        case_variants: variants,
        has_confidence: caps.has_confidence,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let report = build_report(metadata, &outcomes)?;
    write_report_files(&a.out, &report, &outcomes)?;
    print!("{}", merge_reports(std::slice::from_ref(&report))?.to_text());
    println!(
        "{} fills scored; report written to {}",
        outcomes.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let reports: Vec<AuditReport> = a
        .inputs
        .iter()
        .map(|p| {
            if p.is_dir() {
                AuditReport::load(&p.join("report.json"))
            } else {
                AuditReport::load(p)
            }
        })
        .collect::<Result<_>>()?;
    let merged = merge_reports(&reports)?;
    print!("{}", merged.to_text());
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(|e| Error::from(e).in_file(out))?;
        let json = out.join("comparison.json");
        let mut text = serde_json::to_string_pretty(&merged)?;
        text.push('\n');
        fs::write(&json, text).map_err(|e| Error::from(e).in_file(&json))?;
        let csv = out.join("comparison.csv");
        fs::write(&csv, merged.to_csv()).map_err(|e| Error::from(e).in_file(&csv))?;
    }
    Ok(())
}

fn cmd_conformance(a: &ConformanceArgs) -> Result<()> {
    let d = descriptor(&a.backend)?;
    let mut b = backend::open(&d)?;
    let report = check_conformance(b.as_mut(), a.requests, a.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.passed() {
        Ok(())
    } else {
        Err(Error::protocol(
            None,
            format!("{} conformance violations", report.violations.len()),
        ))
    }
}

fn cmd_stub_server(a: &StubArgs) -> Result<()> {
    let tagger: Box<dyn crate::backend::Tagger> = match a.tagger {
        StubTagger::Rulebased => Box::new(RuleBasedTagger),
        StubTagger::Echo => Box::new(EchoTagger),
    };
    match a.tcp {
        None => {
            let stdin = io::stdin();
            let stdout = io::stdout();
            serve(tagger.as_ref(), stdin.lock(), stdout.lock())
        }
        Some(port) => {
            let listener = TcpListener::bind(("127.0.0.1", port))?;
            eprintln!("listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                let reader = BufReader::new(stream.try_clone()?);
                let mut writer = stream;
                serve(tagger.as_ref(), reader, &mut writer)?;
                writer.flush()?;
            }
            Ok(())
        }
    }
}
