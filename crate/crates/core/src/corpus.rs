//! Tutorial corpus ingestion and heading-aligned chunking.
//!
//! Documents are split on markdown headings of levels 1 to 3. A section whose
//! whitespace-token count exceeds the budget is split further on blank-line
//! paragraph boundaries. Fenced code blocks are opaque to both rules: a `#`
//! line inside a fence is never a heading and a blank line inside a fence is
//! never a paragraph boundary.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_TOKENS: usize = 400;
pub const MIN_MAX_TOKENS: usize = 32;

const DOC_EXTENSIONS: &[&str] = &["md", "markdown", "txt"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty: no readable .md/.txt document under {0}")]
    Empty(PathBuf),
    #[error("corpus root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("max_tokens must be at least {MIN_MAX_TOKENS}, got {0}")]
    BudgetTooSmall(usize),
    #[error("duplicate chunk_id {0}")]
    DuplicateChunk(String),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One retrievable tutorial block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusChunk {
    pub chunk_id: String,
    pub source_doc: String,
    pub heading_path: Vec<String>,
    pub body: String,
    pub token_estimate: usize,
}

impl CorpusChunk {
    pub fn new(
        chunk_id: impl Into<String>,
        source_doc: impl Into<String>,
        heading_path: Vec<String>,
        body: impl Into<String>,
    ) -> Self {
        let body = body.into();
        Self {
            chunk_id: chunk_id.into(),
            source_doc: source_doc.into(),
            heading_path,
            token_estimate: estimate_tokens(&body),
            body,
        }
    }
}

/// Whitespace-token count.
pub fn estimate_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub chunks: Vec<CorpusChunk>,
    pub corpus_version: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct ManifestMeta {
    corpus_version: String,
    created_at: DateTime<Utc>,
    chunk_count: usize,
}

impl CorpusManifest {
    pub fn new(chunks: Vec<CorpusChunk>, corpus_version: impl Into<String>) -> Result<Self, CorpusError> {
        let manifest = Self {
            chunks,
            corpus_version: corpus_version.into(),
            created_at: Utc::now(),
        };
        manifest.check_unique()?;
        Ok(manifest)
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn get(&self, chunk_id: &str) -> Option<&CorpusChunk> {
        self.chunks.iter().find(|c| c.chunk_id == chunk_id)
    }

    pub fn check_unique(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for chunk in &self.chunks {
            if !seen.insert(chunk.chunk_id.as_str()) {
                return Err(CorpusError::DuplicateChunk(chunk.chunk_id.clone()));
            }
        }
        Ok(())
    }

    /// Chunk records as line-delimited JSON, one object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for chunk in &self.chunks {
            out.push_str(&serde_json::to_string(chunk).expect("chunk serializes"));
            out.push('\n');
        }
        out
    }

    pub fn chunks_from_jsonl(text: &str) -> Result<Vec<CorpusChunk>, CorpusError> {
        let mut chunks = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let chunk: CorpusChunk = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            chunks.push(chunk);
        }
        Ok(chunks)
    }

    /// Writes the chunk JSONL to `path` and the version/timestamp to the
    /// sidecar returned by [`meta_path`].
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes()).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;

        let meta = ManifestMeta {
            corpus_version: self.corpus_version.clone(),
            created_at: self.created_at,
            chunk_count: self.chunks.len(),
        };
        let meta_file = meta_path(path);
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&meta_file, text + "\n").map_err(io_err(&meta_file))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let mut chunks = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: CorpusChunk = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            chunks.push(chunk);
        }
        let meta_file = meta_path(path);
        let (corpus_version, created_at) = match fs::read_to_string(&meta_file) {
            Ok(text) => {
                let meta: ManifestMeta = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
                    line: 0,
                    message: format!("{}: {e}", meta_file.display()),
                })?;
                (meta.corpus_version, meta.created_at)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                ("unversioned".to_string(), Utc.timestamp_opt(0, 0).unwrap())
            }
            Err(e) => return Err(io_err(&meta_file)(e)),
        };
        let manifest = Self {
            chunks,
            corpus_version,
            created_at,
        };
        manifest.check_unique()?;
        Ok(manifest)
    }
}

/// Sidecar path holding manifest-level metadata (`chunks.jsonl` -> `chunks.meta.json`).
pub fn meta_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("meta.json")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug)]
pub struct Ingestion {
    pub manifest: CorpusManifest,
    pub warnings: Vec<IngestWarning>,
}

/// Ingests every `.md`/`.markdown`/`.txt` file under `root` in path order.
pub fn ingest_corpus(root: &Path) -> Result<CorpusManifest, CorpusError> {
    ingest_corpus_with(root, DEFAULT_MAX_TOKENS).map(|i| i.manifest)
}

pub fn ingest_corpus_with(root: &Path, max_tokens: usize) -> Result<Ingestion, CorpusError> {
    if max_tokens < MIN_MAX_TOKENS {
        return Err(CorpusError::BudgetTooSmall(max_tokens));
    }
    if !root.is_dir() {
        return Err(CorpusError::MissingRoot(root.to_path_buf()));
    }
    let mut docs: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .follow_links(true)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| DOC_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                .unwrap_or(false)
        })
        .collect();
    docs.sort();

    let mut chunks = Vec::new();
    let mut warnings = Vec::new();
    for path in docs {
        let rel = path
            .strip_prefix(root)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("skipping unreadable corpus document {}: {e}", path.display());
                warnings.push(IngestWarning {
                    path: path.clone(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let doc_chunks = chunk_document(&rel, &text, max_tokens)?;
        if doc_chunks.is_empty() {
            log::warn!("corpus document {} has no body text", path.display());
            warnings.push(IngestWarning {
                path: path.clone(),
                message: "document has no body text".into(),
            });
            continue;
        }
        chunks.extend(doc_chunks);
    }
    if chunks.is_empty() {
        return Err(CorpusError::Empty(root.to_path_buf()));
    }
    let version = corpus_fingerprint(&chunks);
    let manifest = CorpusManifest::new(chunks, version)?;
    Ok(Ingestion { manifest, warnings })
}

/// Content hash of the chunk set, used as the corpus version.
fn corpus_fingerprint(chunks: &[CorpusChunk]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for c in chunks {
        h.update(c.chunk_id.as_bytes());
        h.update([0]);
        h.update(c.body.as_bytes());
        h.update([0]);
    }
    format!("sha256:{}", &hex::encode(h.finalize())[..16])
}

/// A markdown heading of level 1-3, returned as `(level, title)`.
pub fn parse_heading(line: &str) -> Option<(usize, &str)> {
    let hashes = line.bytes().take_while(|&b| b == b'#').count();
    if !(1..=3).contains(&hashes) {
        return None;
    }
    let rest = &line[hashes..];
    if rest.is_empty() {
        return Some((hashes, ""));
    }
    if !rest.starts_with([' ', '\t']) {
        return None;
    }
    let title = rest.trim().trim_end_matches('#').trim_end();
    Some((hashes, title))
}

fn is_fence(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("```") || t.starts_with("~~~")
}

struct Section {
    heading_path: Vec<String>,
    lines: Vec<String>,
}

/// Splits one document into chunks. Chunk ids are `<source_doc>#<ordinal>`.
pub fn chunk_document(
    source_doc: &str,
    text: &str,
    max_tokens: usize,
) -> Result<Vec<CorpusChunk>, CorpusError> {
    if max_tokens < MIN_MAX_TOKENS {
        return Err(CorpusError::BudgetTooSmall(max_tokens));
    }

    let mut sections = vec![Section {
        heading_path: Vec::new(),
        lines: Vec::new(),
    }];
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut in_fence = false;
    for line in text.lines() {
        if is_fence(line) {
            in_fence = !in_fence;
        } else if !in_fence {
            if let Some((level, title)) = parse_heading(line) {
                stack.retain(|(l, _)| *l < level);
                stack.push((level, title.to_string()));
                sections.push(Section {
                    heading_path: stack.iter().map(|(_, t)| t.clone()).collect(),
                    lines: Vec::new(),
                });
                continue;
            }
        }
        sections.last_mut().unwrap().lines.push(line.to_string());
    }

    let mut chunks = Vec::new();
    for section in sections {
        for body in split_section(&section.lines, max_tokens) {
            let id = format!("{source_doc}#{}", chunks.len());
            chunks.push(CorpusChunk::new(id, source_doc, section.heading_path.clone(), body));
        }
    }
    Ok(chunks)
}

/// Paragraphs are maximal runs of non-blank lines; fenced blocks glue runs together.
fn paragraphs(lines: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut in_fence = false;
    for line in lines {
        if is_fence(line) {
            in_fence = !in_fence;
        }
        if line.trim().is_empty() && !in_fence {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    // a paragraph that is whitespace only (blank lines inside an unterminated fence) carries no text
    out.retain(|p| !p.trim().is_empty());
    out
}

fn split_section(lines: &[String], max_tokens: usize) -> Vec<String> {
    let paras = paragraphs(lines);
    if paras.is_empty() {
        return Vec::new();
    }
    let total: usize = paras.iter().map(|p| estimate_tokens(p)).sum();
    if total <= max_tokens {
        return vec![paras.join("\n\n")];
    }
    let mut out = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_tokens = 0;
    for p in paras {
        let t = estimate_tokens(&p);
        if !current.is_empty() && current_tokens + t > max_tokens {
            out.push(current.join("\n\n"));
            current.clear();
            current_tokens = 0;
        }
        current_tokens += t;
        current.push(p);
    }
    if !current.is_empty() {
        out.push(current.join("\n\n"));
    }
    out
}
