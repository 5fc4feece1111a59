//! End-to-end driver: retrieve, prompt, generate, extract (the transform
//! stage), then compile, classify and differentially test (the validate
//! stage).
//!
//! Every stage reads and writes plain files under an output directory:
//!
//! - `transform/records.jsonl`: one [`TransformRecord`] per case, manifest order
//! - `transform/<case>.prompt.txt` and `transform/<case>.cc`: prompt and extracted code
//! - `validate/reports.jsonl`: one [`ValidationReport`] per case, manifest order
//! - `validate/summary.json`: the [`RunSummary`]
//! - `work/<case>/`: compiler work directories
//!
//! so stages can be run one at a time and composed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusManifest;
use crate::embed::{embed, EmbeddingProvider, LocalEmbedder};
use crate::generate::{generate, ChatProvider, GenerationRequest, DEFAULT_MODEL, DEFAULT_TEMPERATURE};
use crate::index::{FlatIndex, IndexError, RetrievalHit, DEFAULT_TOP_K};
use crate::prompt::{build_prompt, PromptError, PromptTemplate};
use crate::report::{reports_to_jsonl, RunSummary};
use crate::validate::{
    classify_failure, compile_gate, differential_validate, CaseEntry, CaseManifest, CompilerConfig,
    DifferentialVerdict, FailureCategory, RunInput, ValidationError, ValidationReport, DEFAULT_REL_TOLERANCE,
};

pub const DEFAULT_WORKERS: usize = 4;
pub const DEFAULT_DIFF_THREADS: [usize; 2] = [1, 8];
/// Diagnostics recorded when the model reply contains no code block.
pub const NO_CODE_DIAGNOSTIC: &str = "no code block extracted from model reply";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("retrieval failed for case {case_id}: {message}")]
    Retrieval { case_id: String, message: String },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("malformed {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Retrieval-augmented prompting.
    #[serde(rename = "p4omp")]
    Augmented,
    /// Same prompt with no retrieved context.
    Baseline,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Augmented => "p4omp",
            Self::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p4omp" => Ok(Self::Augmented),
            "baseline" => Ok(Self::Baseline),
            other => Err(PipelineError::InvalidInput(format!("unknown profile `{other}` (expected p4omp or baseline)"))),
        }
    }
}

/// Everything retrieval needs: the chunks, their index and the query embedder.
pub struct Retriever<'a> {
    pub corpus: &'a CorpusManifest,
    pub index: &'a FlatIndex,
    pub embedder: &'a dyn EmbeddingProvider,
}

impl<'a> Retriever<'a> {
    pub fn new(corpus: &'a CorpusManifest, index: &'a FlatIndex, embedder: &'a dyn EmbeddingProvider) -> Result<Self, PipelineError> {
        index.check_against(corpus)?;
        if index.provider_tag() != embedder.tag() {
            return Err(PipelineError::InvalidInput(format!(
                "index was built with `{}` but the query embedder is `{}`",
                index.provider_tag(),
                embedder.tag()
            )));
        }
        Ok(Self { corpus, index, embedder })
    }

    /// Top-k chunks for the whole serial source used as the query.
    pub fn retrieve(&self, case_id: &str, serial_code: &str, k: usize) -> Result<Vec<RetrievalHit>, PipelineError> {
        let q = embed(serial_code, self.embedder).map_err(|e| PipelineError::Retrieval {
            case_id: case_id.into(),
            message: e.to_string(),
        })?;
        Ok(self.index.query_topk(&q, k)?)
    }
}

/// The local embedder fitted on a corpus, as used for both indexing and queries.
pub fn local_embedder_for(corpus: &CorpusManifest) -> LocalEmbedder {
    LocalEmbedder::fit(corpus.chunks.iter().map(|c| c.body.as_str()))
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub top_k: usize,
    pub model: String,
    pub temperature: f64,
    pub template: PromptTemplate,
    pub compiler: CompilerConfig,
    pub diff_threads: Vec<usize>,
    pub run_timeout: Duration,
    pub rel_tolerance: f64,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Augmented,
            top_k: DEFAULT_TOP_K,
            model: DEFAULT_MODEL.into(),
            temperature: DEFAULT_TEMPERATURE,
            template: PromptTemplate::default(),
            compiler: CompilerConfig::default(),
            diff_threads: DEFAULT_DIFF_THREADS.to_vec(),
            run_timeout: Duration::from_secs(120),
            rel_tolerance: DEFAULT_REL_TOLERANCE,
            workers: DEFAULT_WORKERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub case_id: String,
    pub profile: Profile,
    pub excluded_unparallelizable: bool,
    pub retrieved: Vec<RetrievalHit>,
    pub prompt_sha256: Option<String>,
    pub provider: Option<String>,
    pub raw_reply: Option<String>,
    pub extracted_code: Option<String>,
    pub generation_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub transforms: Vec<TransformRecord>,
    pub reports: Vec<ValidationReport>,
    pub summary: RunSummary,
}

fn safe_name(case_id: &str) -> String {
    case_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Compiler work directory of one case; the parallel binary ends up in `parallel/main`.
pub fn case_work_dir(out_dir: &Path, case_id: &str) -> PathBuf {
    out_dir.join("work").join(safe_name(case_id))
}

pub fn transform_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("transform")
}

pub fn validate_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("validate")
}

/// Runs `f` over `items` on up to `workers` threads, keeping input order.
/// After the first error no new items are started; the earliest error wins.
fn parallel_map<T: Sync, R: Send, E: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> Result<R, E> + Sync,
) -> Result<Vec<R>, E> {
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<R, E>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(items.len().max(1)) {
            s.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                if r.is_err() {
                    stop.store(true, Ordering::SeqCst);
                }
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    let mut out = Vec::with_capacity(items.len());
    for slot in slots.into_inner().expect("worker panicked") {
        match slot {
            Some(r) => out.push(r?),
            None => break,
        }
    }
    Ok(out)
}

fn transform_case(
    cases: &CaseManifest,
    case: &CaseEntry,
    retriever: Option<&Retriever<'_>>,
    provider: &dyn ChatProvider,
    config: &PipelineConfig,
    empty_corpus: &CorpusManifest,
) -> Result<(TransformRecord, Option<String>), PipelineError> {
    let mut record = TransformRecord {
        case_id: case.case_id.clone(),
        profile: config.profile,
        excluded_unparallelizable: case.unparallelizable,
        retrieved: Vec::new(),
        prompt_sha256: None,
        provider: None,
        raw_reply: None,
        extracted_code: None,
        generation_error: None,
    };
    if case.unparallelizable {
        return Ok((record, None));
    }
    let serial = cases.read_serial(case)?;
    let (hits, corpus) = match (config.profile, retriever) {
        (Profile::Baseline, _) => (Vec::new(), empty_corpus),
        (Profile::Augmented, Some(r)) => (r.retrieve(&case.case_id, &serial, config.top_k)?, r.corpus),
        (Profile::Augmented, None) => {
            return Err(PipelineError::InvalidInput("the p4omp profile needs a corpus index".into()))
        }
    };
    let bundle = build_prompt(&serial, &hits, corpus, &config.template)?;
    let mut request = GenerationRequest::new(&case.case_id, &bundle.rendered);
    request.model_name = config.model.clone();
    request.temperature = config.temperature;
    record.retrieved = hits;
    record.prompt_sha256 = Some(request.prompt_sha256());
    match generate(&request, provider) {
        Ok(outcome) => {
            record.provider = Some(outcome.provider);
            record.raw_reply = Some(outcome.raw_reply);
            record.extracted_code = outcome.extracted_code;
        }
        Err(e) => {
            log::warn!("{}: generation failed: {e}", case.case_id);
            record.generation_error = Some(e.to_string());
        }
    }
    Ok((record, Some(bundle.rendered)))
}

/// Transform stage over every case; writes `transform/` under `out_dir`.
pub fn transform(
    cases: &CaseManifest,
    retriever: Option<&Retriever<'_>>,
    provider: &dyn ChatProvider,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<Vec<TransformRecord>, PipelineError> {
    let dir = transform_dir(out_dir);
    fs::create_dir_all(&dir)?;
    let empty = CorpusManifest::new(Vec::new(), "empty").expect("empty manifest is valid");
    let results = parallel_map(&cases.cases, config.workers, |case| {
        transform_case(cases, case, retriever, provider, config, &empty)
    })?;
    let mut records = Vec::with_capacity(results.len());
    for (record, prompt) in results {
        let stem = safe_name(&record.case_id);
        if let Some(p) = prompt {
            fs::write(dir.join(format!("{stem}.prompt.txt")), p)?;
        }
        if let Some(code) = &record.extracted_code {
            fs::write(dir.join(format!("{stem}.cc")), code)?;
        }
        records.push(record);
    }
    let jsonl: String = records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect();
    fs::write(dir.join("records.jsonl"), jsonl)?;
    Ok(records)
}

pub fn load_transform(out_dir: &Path) -> Result<Vec<TransformRecord>, PipelineError> {
    let path = transform_dir(out_dir).join("records.jsonl");
    let text = fs::read_to_string(&path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Format {
                path: path.clone(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

fn failed(case_id: &str, category: FailureCategory, diagnostics: String) -> ValidationReport {
    ValidationReport {
        case_id: case_id.into(),
        compile_ok: false,
        failure_category: Some(category),
        diagnostics,
        differential_verdict: DifferentialVerdict::Skipped,
        threads_tested: Vec::new(),
        excluded_unparallelizable: false,
    }
}

fn validate_case(
    cases: &CaseManifest,
    case: &CaseEntry,
    record: &TransformRecord,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<ValidationReport, PipelineError> {
    if case.unparallelizable || record.excluded_unparallelizable {
        return Ok(ValidationReport::excluded(&case.case_id));
    }
    let code = match (&record.extracted_code, &record.generation_error) {
        (Some(code), _) => code,
        (None, Some(e)) => {
            return Ok(failed(&case.case_id, FailureCategory::OtherCompileError, format!("generation failed: {e}")))
        }
        (None, None) => return Ok(failed(&case.case_id, FailureCategory::OtherCompileError, NO_CODE_DIAGNOSTIC.into())),
    };
    let work = case_work_dir(out_dir, &case.case_id);
    let parallel = compile_gate(&config.compiler, code, &work.join("parallel"))?;
    if !parallel.compile_ok {
        let category = classify_failure(&parallel.diagnostics, code);
        return Ok(failed(&case.case_id, category, parallel.diagnostics));
    }
    let serial_src = cases.read_serial(case)?;
    let serial = compile_gate(&config.compiler, &serial_src, &work.join("serial"))?;
    let (verdict, threads_tested) = match (&serial.binary, &parallel.binary) {
        (Some(s), Some(p)) => {
            let input = RunInput {
                args: case.input_args.clone(),
                timeout: config.run_timeout,
                rel_tolerance: config.rel_tolerance,
            };
            let r = differential_validate(s, p, &config.diff_threads, &input)?;
            if let Some(detail) = &r.detail {
                log::info!("{}: {detail}", case.case_id);
            }
            (r.verdict, r.threads_tested)
        }
        _ => {
            log::warn!("{}: serial reference does not compile; differential test skipped", case.case_id);
            (DifferentialVerdict::Skipped, Vec::new())
        }
    };
    Ok(ValidationReport {
        case_id: case.case_id.clone(),
        compile_ok: true,
        failure_category: None,
        diagnostics: parallel.diagnostics,
        differential_verdict: verdict,
        threads_tested,
        excluded_unparallelizable: false,
    })
}

/// Validate stage; writes `validate/reports.jsonl` and `validate/summary.json`.
pub fn validate(
    cases: &CaseManifest,
    records: &[TransformRecord],
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<(Vec<ValidationReport>, RunSummary), PipelineError> {
    let mut paired = Vec::with_capacity(cases.len());
    for case in &cases.cases {
        let record = records.iter().find(|r| r.case_id == case.case_id).ok_or_else(|| {
            PipelineError::InvalidInput(format!("no transform record for case {}", case.case_id))
        })?;
        paired.push((case, record));
    }
    let reports = parallel_map(&paired, config.workers, |(case, record)| {
        validate_case(cases, case, record, config, out_dir)
    })?;
    let summary = RunSummary::from_reports(&reports);
    let dir = validate_dir(out_dir);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("reports.jsonl"), reports_to_jsonl(&reports))?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    Ok((reports, summary))
}

/// Both stages back to back.
pub fn run_pipeline(
    cases: &CaseManifest,
    retriever: Option<&Retriever<'_>>,
    provider: &dyn ChatProvider,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<PipelineRun, PipelineError> {
    let transforms = transform(cases, retriever, provider, config, out_dir)?;
    let (reports, summary) = validate(cases, &transforms, config, out_dir)?;
    Ok(PipelineRun {
        transforms,
        reports,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_names() {
        assert_eq!("p4omp".parse::<Profile>().unwrap(), Profile::Augmented);
        assert_eq!("baseline".parse::<Profile>().unwrap(), Profile::Baseline);
        assert!("rag".parse::<Profile>().is_err());
        assert_eq!(serde_json::to_string(&Profile::Baseline).unwrap(), "\"baseline\"");
    }

    #[test]
    fn parallel_map_keeps_order_and_stops() {
        let items: Vec<usize> = (0..50).collect();
        let out: Result<Vec<usize>, ()> = parallel_map(&items, 4, |x| Ok(x * 2));
        assert_eq!(out.unwrap(), items.iter().map(|x| x * 2).collect::<Vec<_>>());
        let err = parallel_map(&items, 3, |x| if *x == 7 { Err(*x) } else { Ok(*x) });
        assert_eq!(err, Err(7));
        let empty: Result<Vec<u8>, ()> = parallel_map(&[] as &[u8], 4, |x| Ok(*x));
        assert!(empty.unwrap().is_empty());
    }

    #[test]
    fn safe_names() {
        assert_eq!(safe_name("case 1/x"), "case_1_x");
    }
}
