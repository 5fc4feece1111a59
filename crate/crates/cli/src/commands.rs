use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use log::{info, warn};

use omprag_core::bench::{self, BenchLock, BenchRecord, SweepConfig};
use omprag_core::corpus::{ingest_corpus_with, CorpusManifest, DEFAULT_MAX_TOKENS};
use omprag_core::embed::{EmbeddingProvider, RemoteEmbedder, RemoteEmbedderConfig};
use omprag_core::generate::{ChatProvider, LiveChatConfig, LiveChatProvider, RecordingProvider, ReplayProvider};
use omprag_core::harvest::{
    self, FilterConfig, FixtureQaApi, HarvestCategory, QaApi, RecordingQaApi, SnippetCandidate, StackExchangeApi,
    StackExchangeConfig, DEFAULT_MAX_PAGES,
};
use omprag_core::http::ReqwestTransport;
use omprag_core::index::{build_index, FlatIndex};
use omprag_core::pipeline::{self, local_embedder_for, PipelineConfig, Profile, Retriever};
use omprag_core::prompt::PromptTemplate;
use omprag_core::report::{self, parse_reports, ReportError};
use omprag_core::validate::{CaseManifest, CompilerConfig, DifferentialVerdict};

use crate::config::Settings;

/// Bad command-line input; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of markdown/text documents.
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,
    /// Token budget per chunk.
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// `local` (hashed TF-IDF, offline) or `remote` (embeddings endpoint).
    #[arg(long)]
    pub embedder: Option<String>,
}

#[derive(Debug, Args)]
pub struct HarvestArgs {
    /// Comma-separated category slugs; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
    #[arg(long)]
    pub max_pages: Option<u32>,
    /// Read recorded API pages from this directory instead of the network.
    #[arg(long)]
    pub api_fixtures: Option<PathBuf>,
    /// Save every fetched API page here.
    #[arg(long)]
    pub record_dir: Option<PathBuf>,
    /// Curated case manifest placed ahead of the harvested cases.
    #[arg(long)]
    pub curated: Option<PathBuf>,
    /// Skip the compile check (no compiler needed).
    #[arg(long)]
    pub no_compile: bool,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Record live replies into this directory.
    #[arg(long)]
    pub record_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Import a `case_id,threads,wall_seconds` CSV instead of measuring.
    #[arg(long, conflicts_with = "binary")]
    pub import: Option<PathBuf>,
    /// Time a single self-timing binary.
    #[arg(long, requires = "case_id")]
    pub binary: Option<PathBuf>,
    #[arg(long)]
    pub case_id: Option<String>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Arguments passed to `--binary`.
    #[arg(last = true)]
    pub args: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report sets as `LABEL=PATH` (a reports.jsonl file or an output directory).
    #[arg(required = true)]
    pub sets: Vec<String>,
    /// text, csv or json.
    #[arg(long, default_value = "text")]
    pub format: String,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn profile(s: &Settings) -> Result<Profile> {
    match &s.profile {
        None => Ok(Profile::Augmented),
        Some(p) => p.parse().map_err(|e: pipeline::PipelineError| usage(e.to_string())),
    }
}

fn pipeline_config(s: &Settings) -> Result<PipelineConfig> {
    let mut c = PipelineConfig {
        profile: profile(s)?,
        ..PipelineConfig::default()
    };
    if let Some(k) = s.k {
        c.top_k = k;
    }
    if let Some(m) = &s.model {
        c.model = m.clone();
    }
    if let Some(t) = s.temperature {
        c.temperature = t;
    }
    if let Some(t) = &s.template {
        c.template = PromptTemplate::from_file(t)?;
    }
    if let Some(cmd) = &s.compiler {
        c.compiler = CompilerConfig::parse(cmd)?;
    }
    if let Some(secs) = s.compile_timeout_secs {
        c.compiler = c.compiler.with_timeout(Duration::from_secs(secs));
    }
    if let Some(secs) = s.run_timeout_secs {
        c.run_timeout = Duration::from_secs(secs);
    }
    if let Some(d) = &s.diff_threads {
        c.diff_threads = d.clone();
    }
    if let Some(w) = s.workers {
        c.workers = w;
    }
    Ok(c)
}

fn manifest(s: &Settings) -> Result<CaseManifest> {
    let path = s.manifest.as_ref().ok_or_else(|| usage("--manifest is required"))?;
    Ok(CaseManifest::load(path)?)
}

fn embedder(s: &Settings, corpus: &CorpusManifest) -> Result<Box<dyn EmbeddingProvider>> {
    match s.embedder.as_deref().unwrap_or("local") {
        "local" => Ok(Box::new(local_embedder_for(corpus))),
        "remote" => {
            let mut config = RemoteEmbedderConfig::default();
            if let Some(e) = &s.embed_endpoint {
                config.endpoint = e.clone();
            }
            if let Some(m) = &s.embed_model {
                config.model = m.clone();
            }
            if let Some(k) = &s.api_key_env {
                config.api_key_env = k.clone();
            }
            if std::env::var(&config.api_key_env).is_err() {
                bail!("remote embedder needs an API key in ${}", config.api_key_env);
            }
            Ok(Box::new(RemoteEmbedder::new(config, Arc::new(ReqwestTransport::new()?))))
        }
        other => Err(usage(format!("unknown embedder `{other}` (expected local or remote)"))),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ingest(s: &Settings, a: &IngestArgs) -> Result<()> {
    let dir = a.corpus_dir.clone().or_else(|| s.corpus_dir.clone()).unwrap_or_else(|| PathBuf::from("corpus"));
    let max_tokens = a.max_tokens.or(s.max_tokens).unwrap_or(DEFAULT_MAX_TOKENS);
    let ingestion = ingest_corpus_with(&dir, max_tokens)?;
    for w in &ingestion.warnings {
        warn!("{}: {}", w.path.display(), w.message);
    }
    let out = s.corpus_manifest();
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    ingestion.manifest.save(&out)?;
    info!("{} chunks from {} -> {}", ingestion.manifest.len(), dir.display(), out.display());
    Ok(())
}

pub fn index(s: &Settings, a: &IndexArgs) -> Result<()> {
    let mut s = s.clone();
    if a.embedder.is_some() {
        s.embedder = a.embedder.clone();
    }
    let corpus = CorpusManifest::load(&s.corpus_manifest())
        .with_context(|| format!("loading {} (run `omprag ingest` first)", s.corpus_manifest().display()))?;
    let provider = embedder(&s, &corpus)?;
    let idx = build_index(&corpus, provider.as_ref())?;
    let out = s.index_path();
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    idx.save(&out)?;
    info!("indexed {} chunks with {} -> {}", idx.len(), idx.provider_tag(), out.display());
    Ok(())
}

pub fn harvest(s: &Settings, a: &HarvestArgs) -> Result<()> {
    let names = a.categories.clone().or_else(|| s.categories.clone());
    let categories: Vec<HarvestCategory> = match names {
        None => HarvestCategory::ALL.to_vec(),
        Some(v) => v
            .iter()
            .map(|n| n.parse().map_err(|e: harvest::HarvestError| usage(e.to_string())))
            .collect::<Result<_>>()?,
    };
    let max_pages = a.max_pages.or(s.max_pages).unwrap_or(DEFAULT_MAX_PAGES);
    let filter = FilterConfig {
        min_lines: s.min_lines.unwrap_or(harvest::DEFAULT_MIN_LINES),
    };

    let fixtures = a.api_fixtures.clone().or_else(|| s.api_fixtures.clone());
    let base: Box<dyn QaApi> = match fixtures {
        Some(dir) => Box::new(FixtureQaApi::new(dir)),
        None => {
            let mut config = StackExchangeConfig::default();
            for (k, v) in s.keywords.iter().flatten() {
                let cat: HarvestCategory = k.parse().map_err(|e: harvest::HarvestError| usage(e.to_string()))?;
                config.keywords.insert(cat, v.clone());
            }
            Box::new(StackExchangeApi::new(config, Arc::new(ReqwestTransport::new()?)))
        }
    };
    let api: Box<dyn QaApi> = match a.record_dir.clone().or_else(|| s.record_dir.clone()) {
        Some(dir) => Box::new(RecordingQaApi::new(base, dir)),
        None => base,
    };

    let out = s.out_dir().join("harvest");
    let compiler = match &s.compiler {
        Some(c) => CompilerConfig::parse(c)?,
        None => CompilerConfig::default(),
    };
    let mut all: Vec<SnippetCandidate> = Vec::new();
    for cat in categories {
        let raw = harvest::fetch_candidates(cat, max_pages, api.as_ref()).map_err(|e| match &e {
            harvest::HarvestError::Fetch { advice: Some(adv), .. } => anyhow!("{e} ({adv})"),
            _ => e.into(),
        })?;
        info!("{}: {} candidates", cat.name(), raw.len());
        for (i, c) in raw.into_iter().enumerate() {
            let c = harvest::clean_and_filter_with(c, &filter);
            let c = if a.no_compile {
                c
            } else {
                harvest::compile_filter(c, &compiler, &out.join("work").join(format!("{}-{i}", cat.slug())))?
            };
            all.push(c);
        }
    }
    for (reason, n) in harvest::rejection_counts(&all) {
        match reason {
            Some(r) => info!("rejected {r:?}: {n}"),
            None => info!("accepted: {n}"),
        }
    }
    let jsonl: String = all
        .iter()
        .map(|c| serde_json::to_string(c).expect("candidate serializes") + "\n")
        .collect();
    write_file(&out.join("candidates.jsonl"), &jsonl)?;

    let curated = match &a.curated {
        Some(p) => CaseManifest::load(p)?,
        None => CaseManifest::new(&out, Vec::new())?,
    };
    let survivors: Vec<SnippetCandidate> = all.into_iter().filter(SnippetCandidate::is_survivor).collect();
    let cases = harvest::build_case_manifest(&curated, &survivors, &out)?;
    cases.save(&out.join("manifest.jsonl"))?;
    info!("{} cases -> {}", cases.len(), out.join("manifest.jsonl").display());
    Ok(())
}

fn chat_provider(s: &Settings, record_dir: Option<PathBuf>) -> Result<Box<dyn ChatProvider>> {
    if let Some(dir) = &s.replay_dir {
        if record_dir.is_some() {
            return Err(usage("--replay-dir and --record-dir are mutually exclusive"));
        }
        return Ok(Box::new(ReplayProvider::from_dir(dir)?));
    }
    let mut config = LiveChatConfig::default();
    if let Some(e) = &s.chat_endpoint {
        config.endpoint = e.clone();
    }
    if let Some(k) = &s.api_key_env {
        config.api_key_env = k.clone();
    }
    if std::env::var(&config.api_key_env).is_err() {
        bail!(
            "live generation needs an API key in ${} (or pass --replay-dir)",
            config.api_key_env
        );
    }
    let live = LiveChatProvider::new(config, Arc::new(ReqwestTransport::new()?));
    Ok(match record_dir {
        Some(dir) => Box::new(RecordingProvider::new(live, dir)),
        None => Box::new(live),
    })
}

pub fn transform(s: &Settings, a: &TransformArgs) -> Result<()> {
    let config = pipeline_config(s)?;
    let cases = manifest(s)?;
    let provider = chat_provider(s, a.record_dir.clone().or_else(|| s.record_dir.clone()))?;
    let out = s.out_dir();
    let records = match config.profile {
        Profile::Baseline => pipeline::transform(&cases, None, provider.as_ref(), &config, &out)?,
        Profile::Augmented => {
            let corpus = CorpusManifest::load(&s.corpus_manifest())
                .with_context(|| format!("loading {}", s.corpus_manifest().display()))?;
            let idx = FlatIndex::load(&s.index_path())
                .with_context(|| format!("loading {} (run `omprag index` first)", s.index_path().display()))?;
            let emb = embedder(s, &corpus)?;
            let retriever = Retriever::new(&corpus, &idx, emb.as_ref())?;
            pipeline::transform(&cases, Some(&retriever), provider.as_ref(), &config, &out)?
        }
    };
    let failed = records.iter().filter(|r| r.generation_error.is_some()).count();
    if failed > 0 {
        warn!("{failed} of {} cases had generation errors", records.len());
    }
    info!("transformed {} cases -> {}", records.len(), pipeline::transform_dir(&out).display());
    Ok(())
}

pub fn validate(s: &Settings) -> Result<()> {
    let config = pipeline_config(s)?;
    let cases = manifest(s)?;
    let out = s.out_dir();
    let records = pipeline::load_transform(&out).context("loading transform records (run `omprag transform` first)")?;
    let (reports, _) = pipeline::validate(&cases, &records, &config, &out)?;
    print!("{}", report::render(&[(config.profile.as_str(), &reports)], report::ReportFormat::Text));
    Ok(())
}

pub fn run(s: &Settings, a: &TransformArgs) -> Result<()> {
    if profile(s)? == Profile::Augmented {
        ingest(
            s,
            &IngestArgs {
                corpus_dir: None,
                max_tokens: None,
            },
        )?;
        index(s, &IndexArgs { embedder: None })?;
    }
    transform(s, a)?;
    validate(s)
}

pub fn bench(s: &Settings, a: &BenchArgs) -> Result<()> {
    let out = s.out_dir().join("bench");
    let records: Vec<BenchRecord> = if let Some(csv) = &a.import {
        bench::import_records_file(csv)?
    } else {
        let sweep = SweepConfig {
            thread_counts: s.threads_sweep.clone().unwrap_or_else(|| bench::DEFAULT_THREAD_SWEEP.to_vec()),
            repetitions: a.repetitions.or(s.repetitions).unwrap_or(bench::DEFAULT_REPETITIONS),
            ..SweepConfig::default()
        };
        let lock = BenchLock::acquire(&s.bench_lock())?;
        if let Some(bin) = &a.binary {
            let case_id = a.case_id.as_deref().expect("clap enforces --case-id");
            let sweep = SweepConfig {
                args: a.args.clone(),
                ..sweep
            };
            bench::run_sweep(&lock, case_id, bin, &sweep)?
        } else {
            bench_accepted(s, &lock, &sweep)?
        }
    };
    let speedups = bench::compute_speedups(&records)?;
    write_file(&out.join("records.csv"), &bench::records_csv(&records))?;
    write_file(&out.join("speedups.csv"), &bench::speedups_csv(&speedups))?;
    let table = format!(
        "{}\n{}",
        bench::runtime_table(&records),
        bench::speedup_table(&speedups)
    );
    write_file(&out.join("table.txt"), &table)?;
    write_file(&out.join("speedup_series.tsv"), &bench::speedup_series(&speedups))?;
    print!("{table}");
    Ok(())
}

/// Sweeps every case whose parallel build passed validation. Cases whose
/// binary does not report its own time are skipped with a warning.
fn bench_accepted(s: &Settings, lock: &BenchLock, sweep: &SweepConfig) -> Result<Vec<BenchRecord>> {
    let out = s.out_dir();
    let path = pipeline::validate_dir(&out).join("reports.jsonl");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {} (run `omprag validate` first)", path.display()))?;
    let reports = parse_reports(&text)?;
    let cases = s.manifest.as_ref().map(|p| CaseManifest::load(p)).transpose()?;
    let mut records = Vec::new();
    for r in reports.iter().filter(|r| r.compile_ok && r.differential_verdict == DifferentialVerdict::Pass) {
        let bin = pipeline::case_work_dir(&out, &r.case_id).join("parallel").join("main");
        let args = cases
            .as_ref()
            .and_then(|m| m.cases.iter().find(|c| c.case_id == r.case_id))
            .map(|c| c.input_args.clone())
            .unwrap_or_default();
        let config = SweepConfig { args, ..sweep.clone() };
        match bench::run_sweep(lock, &r.case_id, &bin, &config) {
            Ok(rs) => records.extend(rs),
            Err(e) => warn!("skipping {}: {e}", r.case_id),
        }
    }
    if records.is_empty() {
        bail!("no accepted case produced timings");
    }
    Ok(records)
}

fn load_set(path: &Path) -> Result<Vec<omprag_core::validate::ValidationReport>> {
    let file = if path.is_dir() {
        pipeline::validate_dir(path).join("reports.jsonl")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    parse_reports(&text).with_context(|| format!("parsing {}", file.display()))
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let format = a.format.parse().map_err(|e: ReportError| usage(e.to_string()))?;
    let mut sets = Vec::with_capacity(a.sets.len());
    for spec in &a.sets {
        let (label, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("report set `{spec}` is not LABEL=PATH")))?;
        sets.push((label.to_string(), load_set(Path::new(path))?));
    }
    let refs: Vec<(&str, &[_])> = sets.iter().map(|(l, r)| (l.as_str(), r.as_slice())).collect();
    let text = report::render(&refs, format);
    match &a.output {
        Some(p) => write_file(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
