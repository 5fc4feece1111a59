//! Exact flat vector index with top-k cosine retrieval.
//!
//! On-disk format: a JSON header line
//! `{"format":"flat-index/1","provider_tag":..,"dimension":..,"count":..}`
//! followed by `count` lines `{"chunk_id":..,"vector":[..]}`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusManifest;
use crate::embed::{cosine_similarity, embed, EmbedError, EmbeddingProvider, EmbeddingVector};

pub const DEFAULT_TOP_K: usize = 4;
const FORMAT: &str = "flat-index/1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cannot build index from an empty manifest")]
    EmptyManifest,
    #[error("duplicate chunk_id {0} in manifest")]
    DuplicateChunk(String),
    #[error("embedding chunk {chunk_id} failed: {source}")]
    Embed {
        chunk_id: String,
        #[source]
        source: EmbedError,
    },
    #[error("index file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("index entry {0} has no chunk in the manifest")]
    UnknownChunk(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    provider_tag: String,
    dimension: usize,
    entries: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    provider_tag: String,
    dimension: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct EntryLine {
    chunk_id: String,
    vector: Vec<f64>,
}

/// Embeds every chunk of `manifest`, in manifest order.
pub fn build_index(
    manifest: &CorpusManifest,
    provider: &dyn EmbeddingProvider,
) -> Result<FlatIndex, IndexError> {
    if manifest.is_empty() {
        return Err(IndexError::EmptyManifest);
    }
    let mut seen = HashSet::new();
    for chunk in &manifest.chunks {
        if !seen.insert(chunk.chunk_id.as_str()) {
            return Err(IndexError::DuplicateChunk(chunk.chunk_id.clone()));
        }
    }
    let mut entries = Vec::with_capacity(manifest.len());
    for chunk in &manifest.chunks {
        let vector = embed(&chunk.body, provider).map_err(|source| IndexError::Embed {
            chunk_id: chunk.chunk_id.clone(),
            source,
        })?;
        entries.push(IndexEntry {
            chunk_id: chunk.chunk_id.clone(),
            vector,
        });
    }
    FlatIndex::from_entries(provider.tag().to_string(), entries)
}

impl FlatIndex {
    pub fn from_entries(provider_tag: String, entries: Vec<IndexEntry>) -> Result<Self, IndexError> {
        let dimension = entries.first().map(|e| e.vector.dimension()).unwrap_or(0);
        let mut seen = HashSet::new();
        for e in &entries {
            if e.vector.provider_tag() != provider_tag {
                return Err(IndexError::InvalidInput(format!(
                    "entry {} has provider {} but index is {}",
                    e.chunk_id,
                    e.vector.provider_tag(),
                    provider_tag
                )));
            }
            if e.vector.dimension() != dimension {
                return Err(IndexError::InvalidInput(format!(
                    "entry {} has dimension {} but index is {}",
                    e.chunk_id,
                    e.vector.dimension(),
                    dimension
                )));
            }
            if !seen.insert(e.chunk_id.as_str()) {
                return Err(IndexError::DuplicateChunk(e.chunk_id.clone()));
            }
        }
        Ok(Self {
            provider_tag,
            dimension,
            entries,
        })
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Top `k` entries by descending cosine score; equal scores are ordered by
    /// ascending chunk_id.
    pub fn query_topk(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidInput("k must be at least 1".into()));
        }
        if query.provider_tag() != self.provider_tag {
            return Err(IndexError::InvalidInput(format!(
                "query provider {} does not match index provider {}",
                query.provider_tag(),
                self.provider_tag
            )));
        }
        let mut scored: Vec<(f64, &str)> = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let score = cosine_similarity(query, &e.vector)
                .map_err(|err| IndexError::InvalidInput(err.to_string()))?;
            scored.push((score, e.chunk_id.as_str()));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (score, id))| RetrievalHit {
                chunk_id: id.to_string(),
                score,
                rank: i + 1,
            })
            .collect())
    }

    /// Every entry must name a chunk of the companion manifest.
    pub fn check_against(&self, manifest: &CorpusManifest) -> Result<(), IndexError> {
        let ids: HashSet<&str> = manifest.chunks.iter().map(|c| c.chunk_id.as_str()).collect();
        match self.entries.iter().find(|e| !ids.contains(e.chunk_id.as_str())) {
            Some(e) => Err(IndexError::UnknownChunk(e.chunk_id.clone())),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        let header = Header {
            format: FORMAT.into(),
            provider_tag: self.provider_tag.clone(),
            dimension: self.dimension,
            count: self.entries.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            let line = EntryLine {
                chunk_id: e.chunk_id.clone(),
                vector: e.vector.values().to_vec(),
            };
            out.push_str(&serde_json::to_string(&line).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, IndexError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(IndexError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let header: Header = serde_json::from_str(first).map_err(|e| IndexError::Format {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format != FORMAT {
            return Err(IndexError::Format {
                line: 1,
                message: format!("unsupported format {}", header.format),
            });
        }
        let mut entries = Vec::with_capacity(header.count);
        for (idx, line) in lines {
            let parsed: EntryLine = serde_json::from_str(line).map_err(|e| IndexError::Format {
                line: idx + 1,
                message: e.to_string(),
            })?;
            if parsed.vector.len() != header.dimension {
                return Err(IndexError::Format {
                    line: idx + 1,
                    message: format!(
                        "vector has dimension {} but header says {}",
                        parsed.vector.len(),
                        header.dimension
                    ),
                });
            }
            let vector = EmbeddingVector::from_unit(parsed.vector, header.provider_tag.clone())
                .map_err(|e| IndexError::Format {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            entries.push(IndexEntry {
                chunk_id: parsed.chunk_id,
                vector,
            });
        }
        if entries.len() != header.count {
            return Err(IndexError::Format {
                line: 1,
                message: format!("header count {} but {} entries", header.count, entries.len()),
            });
        }
        Self::from_entries(header.provider_tag, entries)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
