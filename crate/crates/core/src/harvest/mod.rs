//! Harvesting of benchmark programs from accepted Q&A answers.
//!
//! Answers are fetched per algorithmic category, their code blocks
//! extracted, cleaned and filtered in a fixed order, and the survivors
//! that compile are appended to a case manifest.

mod api;
mod filter;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use api::{Answer, AnswerPage, FixtureQaApi, QaApi, RecordingQaApi, StackExchangeApi, StackExchangeConfig};
pub use filter::HARNESS;

use crate::validate::{compile_gate, CaseEntry, CaseManifest, CompilerConfig, ValidationError};

pub const DEFAULT_MIN_LINES: usize = 10;
pub const DEFAULT_MAX_PAGES: u32 = 15;

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fetch failed: {message}{}", advice.as_ref().map(|a| format!(" ({a})")).unwrap_or_default())]
    Fetch { message: String, advice: Option<String> },
    #[error("no recorded fixture at {}", path.display())]
    ReplayMiss { path: PathBuf },
    #[error("malformed fixture {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HarvestCategory {
    DotProduct,
    MatrixMultiplication,
    Quicksort,
    Histogram,
    PrefixSum,
    Jacobi2D,
    MandelbrotSet,
    MonteCarlo,
    VectorAddition,
    Convolution,
}

impl HarvestCategory {
    pub const ALL: [HarvestCategory; 10] = [
        Self::DotProduct,
        Self::MatrixMultiplication,
        Self::Quicksort,
        Self::Histogram,
        Self::PrefixSum,
        Self::Jacobi2D,
        Self::MandelbrotSet,
        Self::MonteCarlo,
        Self::VectorAddition,
        Self::Convolution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DotProduct => "dot product",
            Self::MatrixMultiplication => "matrix multiplication",
            Self::Quicksort => "quicksort",
            Self::Histogram => "histogram",
            Self::PrefixSum => "prefix sum",
            Self::Jacobi2D => "Jacobi 2D method",
            Self::MandelbrotSet => "Mandelbrot set",
            Self::MonteCarlo => "Monte Carlo simulation",
            Self::VectorAddition => "vector addition",
            Self::Convolution => "convolution",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Self::DotProduct => "dot_product",
            Self::MatrixMultiplication => "matrix_multiplication",
            Self::Quicksort => "quicksort",
            Self::Histogram => "histogram",
            Self::PrefixSum => "prefix_sum",
            Self::Jacobi2D => "jacobi_2d",
            Self::MandelbrotSet => "mandelbrot_set",
            Self::MonteCarlo => "monte_carlo",
            Self::VectorAddition => "vector_addition",
            Self::Convolution => "convolution",
        }
    }

    /// Search string used when the configuration does not override it.
    pub fn default_keywords(self) -> &'static str {
        match self {
            Self::DotProduct => "dot product loop",
            Self::MatrixMultiplication => "matrix multiplication loop",
            Self::Quicksort => "quicksort implementation",
            Self::Histogram => "histogram array count",
            Self::PrefixSum => "prefix sum array",
            Self::Jacobi2D => "jacobi iteration 2d grid",
            Self::MandelbrotSet => "mandelbrot set",
            Self::MonteCarlo => "monte carlo simulation",
            Self::VectorAddition => "vector addition loop",
            Self::Convolution => "convolution loop",
        }
    }
}

impl fmt::Display for HarvestCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HarvestCategory {
    type Err = HarvestError;

    /// Accepts the display name or the slug, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s) || c.slug().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarvestError::InvalidInput(format!("unknown category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectionReason {
    NoInclude,
    NoForLoop,
    TooShort,
    CompileFail,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetCandidate {
    pub origin_url: String,
    pub category: HarvestCategory,
    pub raw_code: String,
    pub cleaned_code: Option<String>,
    pub rejection_reason: Option<RejectionReason>,
}

impl SnippetCandidate {
    pub fn raw(origin_url: impl Into<String>, category: HarvestCategory, raw_code: impl Into<String>) -> Self {
        Self {
            origin_url: origin_url.into(),
            category,
            raw_code: raw_code.into(),
            cleaned_code: None,
            rejection_reason: None,
        }
    }

    pub fn is_survivor(&self) -> bool {
        self.cleaned_code.is_some() && self.rejection_reason.is_none()
    }

    fn reject(mut self, reason: RejectionReason) -> Self {
        self.cleaned_code = None;
        self.rejection_reason = Some(reason);
        self
    }
}

static CODE_BLOCK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<pre[^>]*>\s*<code[^>]*>(.*?)</code>\s*</pre>").unwrap());

/// Decoded `<pre><code>` blocks of an HTML answer body, in document order.
pub fn extract_code_blocks(html: &str) -> Vec<String> {
    CODE_BLOCK
        .captures_iter(html)
        .map(|c| html_escape::decode_html_entities(&c[1]).into_owned())
        .filter(|b| !b.trim().is_empty())
        .collect()
}

/// Raw candidates for one category: one per answer that contains code (its
/// longest block, earliest on ties), in API order. Stops early when the API
/// reports no more pages.
pub fn fetch_candidates(
    category: HarvestCategory,
    max_pages: u32,
    api: &dyn QaApi,
) -> Result<Vec<SnippetCandidate>, HarvestError> {
    if max_pages == 0 {
        return Err(HarvestError::InvalidInput("max_pages must be positive".into()));
    }
    let mut out = Vec::new();
    for page in 1..=max_pages {
        let result = api.fetch_page(category, page)?;
        for answer in &result.items {
            let blocks = extract_code_blocks(&answer.body);
            let best = blocks.iter().fold(None::<&String>, |best, b| match best {
                Some(x) if x.len() >= b.len() => Some(x),
                _ => Some(b),
            });
            if let Some(code) = best {
                out.push(SnippetCandidate::raw(answer.link.clone(), category, code.clone()));
            }
        }
        if !result.has_more {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    pub min_lines: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_lines: DEFAULT_MIN_LINES,
        }
    }
}

/// Cleans `raw_code` and applies the structural filters in order:
/// I/O removal, comment removal, `#include` check, for-loop check, length
/// check. The first failing check names the rejection.
pub fn clean_and_filter(candidate: SnippetCandidate) -> SnippetCandidate {
    clean_and_filter_with(candidate, &FilterConfig::default())
}

pub fn clean_and_filter_with(candidate: SnippetCandidate, config: &FilterConfig) -> SnippetCandidate {
    if candidate.raw_code.trim().is_empty() {
        return candidate.reject(RejectionReason::Empty);
    }
    let io = filter::remove_io(&candidate.raw_code);
    let code = filter::strip_comments(&io.code);
    if filter::only_records(&code) {
        return candidate.reject(RejectionReason::Empty);
    }
    if !filter::has_include(&code) {
        return candidate.reject(RejectionReason::NoInclude);
    }
    if !filter::has_for_with_body(&code) {
        return candidate.reject(RejectionReason::NoForLoop);
    }
    if filter::non_blank_lines(&code) < config.min_lines {
        return candidate.reject(RejectionReason::TooShort);
    }
    let code = if io.recorded { filter::insert_harness(&code) } else { code };
    SnippetCandidate {
        cleaned_code: Some(code),
        rejection_reason: None,
        ..candidate
    }
}

/// Compiles the cleaned code without OpenMP; failures become `CompileFail`.
/// Candidates that were already rejected pass through unchanged.
pub fn compile_filter(
    candidate: SnippetCandidate,
    compiler: &CompilerConfig,
    work_dir: &Path,
) -> Result<SnippetCandidate, HarvestError> {
    let Some(code) = candidate.cleaned_code.as_deref() else {
        return Ok(candidate);
    };
    let outcome = compile_gate(&compiler.without_openmp(), code, work_dir)?;
    if outcome.compile_ok {
        Ok(candidate)
    } else {
        log::debug!("{}: {}", candidate.origin_url, outcome.diagnostics.trim());
        Ok(candidate.reject(RejectionReason::CompileFail))
    }
}

/// Writes curated cases then survivors as `cases/case<N>.cc` under
/// `out_dir` (numbered from 1) and returns the matching manifest.
pub fn build_case_manifest(
    curated: &CaseManifest,
    survivors: &[SnippetCandidate],
    out_dir: &Path,
) -> Result<CaseManifest, HarvestError> {
    let cases_dir = out_dir.join("cases");
    fs::create_dir_all(&cases_dir)?;
    let mut entries = Vec::with_capacity(curated.len() + survivors.len());
    let mut next = 1;
    let mut write_case = |source: &str, template: CaseEntry| -> Result<(), HarvestError> {
        let case_id = format!("case{next}");
        let rel = format!("cases/{case_id}.cc");
        fs::write(out_dir.join(&rel), source)?;
        entries.push(CaseEntry {
            case_id,
            serial_path: rel,
            ..template
        });
        next += 1;
        Ok(())
    };
    for case in &curated.cases {
        let source = curated.read_serial(case)?;
        write_case(&source, case.clone())?;
    }
    for s in survivors {
        let Some(code) = s.cleaned_code.as_deref().filter(|_| s.is_survivor()) else {
            return Err(HarvestError::InvalidInput(format!("{} is not a survivor", s.origin_url)));
        };
        write_case(
            code,
            CaseEntry {
                case_id: String::new(),
                serial_path: String::new(),
                input_args: Vec::new(),
                unparallelizable: false,
                origin_url: Some(s.origin_url.clone()),
            },
        )?;
    }
    Ok(CaseManifest::new(out_dir, entries)?)
}

/// Per-reason counts for a harvest log line.
pub fn rejection_counts(candidates: &[SnippetCandidate]) -> Vec<(Option<RejectionReason>, usize)> {
    let mut counts: Vec<(Option<RejectionReason>, usize)> = Vec::new();
    for c in candidates {
        match counts.iter_mut().find(|(r, _)| *r == c.rejection_reason) {
            Some((_, n)) => *n += 1,
            None => counts.push((c.rejection_reason, 1)),
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cand(code: &str) -> SnippetCandidate {
        SnippetCandidate::raw("https://example.org/a/1", HarvestCategory::DotProduct, code)
    }

    const GOOD: &str = "#include <iostream>
#include <vector>
// dot product of two vectors
int main() {
    const int n = 1000;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
        a[i] = i * 0.5;
        b[i] = 2.0 - i * 0.001;
    }
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += a[i] * b[i];
    std::cout << \"dot = \" << dot << std::endl;
    return 0;
}
";

    #[test]
    fn survivor_gets_harness() {
        let c = clean_and_filter(cand(GOOD));
        assert!(c.is_survivor());
        let code = c.cleaned_code.unwrap();
        assert!(code.contains("omprag_harness::record(dot);"));
        assert!(!code.contains("std::cout"));
        assert!(!code.contains("// dot product"));
        assert!(code.contains(HARNESS));
    }

    #[test]
    fn rejection_order() {
        assert_eq!(clean_and_filter(cand(" \n\t\n")).rejection_reason, Some(RejectionReason::Empty));
        assert_eq!(clean_and_filter(cand("// only\n/* comments */\n")).rejection_reason, Some(RejectionReason::Empty));
        assert_eq!(clean_and_filter(cand("int main() { while (1) {} }")).rejection_reason, Some(RejectionReason::NoInclude));
        assert_eq!(
            clean_and_filter(cand("#include <cstdio>\nint main() { int i = 0; while (i < 3) ++i; }")).rejection_reason,
            Some(RejectionReason::NoForLoop)
        );
        assert_eq!(
            clean_and_filter(cand("#include <cstdio>\nint main() {\n int s = 0;\n for (int i = 0; i < 3; ++i) s += i;\n}\n")).rejection_reason,
            Some(RejectionReason::TooShort)
        );
    }

    #[test]
    fn html_blocks() {
        let html = "<p>Try:</p><pre class=\"lang-cpp\"><code>if (a &lt; b &amp;&amp; c) {}\n</code></pre><p>x</p><pre><code>  </code></pre>";
        assert_eq!(extract_code_blocks(html), vec!["if (a < b && c) {}\n".to_string()]);
    }

    #[test]
    fn zero_pages_invalid() {
        let api = FixtureQaApi::new("/nonexistent");
        assert!(matches!(fetch_candidates(HarvestCategory::Histogram, 0, &api), Err(HarvestError::InvalidInput(_))));
    }

    #[test]
    fn category_parsing() {
        for c in HarvestCategory::ALL {
            assert_eq!(c.name().parse::<HarvestCategory>().unwrap(), c);
            assert_eq!(c.slug().parse::<HarvestCategory>().unwrap(), c);
        }
        assert!("sorting".parse::<HarvestCategory>().is_err());
    }

    #[test]
    fn manifest_numbering() {
        let dir = tempfile::tempdir().unwrap();
        let src_dir = dir.path().join("curated");
        fs::create_dir_all(&src_dir).unwrap();
        fs::write(src_dir.join("a.cc"), "int main(){}\n").unwrap();
        let curated = CaseManifest::new(
            &src_dir,
            vec![CaseEntry {
                case_id: "list_walk".into(),
                serial_path: "a.cc".into(),
                input_args: vec![],
                unparallelizable: true,
                origin_url: None,
            }],
        )
        .unwrap();
        let survivor = clean_and_filter(cand(GOOD));
        let out = dir.path().join("out");
        let m = build_case_manifest(&curated, &[survivor.clone(), survivor], &out).unwrap();
        assert_eq!(m.cases.iter().map(|c| c.case_id.as_str()).collect::<Vec<_>>(), ["case1", "case2", "case3"]);
        assert!(m.cases[0].unparallelizable);
        assert!(out.join("cases/case3.cc").exists());
        assert_eq!(m.cases[2].origin_url.as_deref(), Some("https://example.org/a/1"));
        let rejected = clean_and_filter(cand(""));
        assert!(build_case_manifest(&curated, &[rejected], &out).is_err());
    }

    proptest! {
        #[test]
        fn cleaning_is_idempotent(
            extra_io in prop::collection::vec(0usize..4, 0..6),
            comment in any::<bool>(),
        ) {
            let mut code = String::from("#include <cstdio>\n#include <iostream>\nint main() {\n    double acc = 0.0;\n    int n = 64;\n");
            for (k, kind) in extra_io.iter().enumerate() {
                match kind {
                    0 => code.push_str(&format!("    std::cout << \"v\" << acc + {k} << '\\n';\n")),
                    1 => code.push_str(&format!("    printf(\"%d %f\\n\", n, acc * {k});\n")),
                    2 => code.push_str("    std::cin >> n;\n"),
                    _ => code.push_str("    puts(\"tick\");\n"),
                }
            }
            if comment {
                code.push_str("    // accumulate\n    /* block */\n");
            }
            code.push_str("    for (int i = 0; i < n; ++i) {\n        acc += i * 0.5;\n    }\n    for (int i = 0; i < n; ++i) printf(\"%f\\n\", acc);\n    return 0;\n}\n");
            let first = clean_and_filter(cand(&code));
            prop_assert!(first.is_survivor());
            let cleaned = first.cleaned_code.clone().unwrap();
            let second = clean_and_filter(cand(&cleaned));
            prop_assert_eq!(second.cleaned_code, Some(cleaned));
        }
    }
}
