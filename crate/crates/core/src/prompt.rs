//! Prompt assembly: instruction template + retrieved tutorial blocks + serial code.
//!
//! Every inserted section is wrapped in sentinel lines carrying a tag
//! (`omprag-<n>`) chosen so that it occurs in none of the inserted texts.
//! [`parse_rendered`] uses the tag to cut each section back out byte for byte.

use std::fs;
use std::path::Path;

use regex::Regex;
use std::sync::LazyLock;
use thiserror::Error;

use crate::corpus::{estimate_tokens, CorpusManifest};
use crate::index::RetrievalHit;

pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/default_prompt.txt");
pub const CONTEXT_PLACEHOLDER: &str = "{{context}}";
pub const CODE_PLACEHOLDER: &str = "{{code}}";

/// Sentence that every rendered prompt carries.
pub const EMPHASIS_CLAUSE: &str =
    "The generated code must be syntactically correct and must preserve the semantics of the original program.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid template: {0}")]
    Template(String),
    #[error("serial code is empty")]
    EmptyCode,
    #[error("retrieval hit references unknown chunk {0}")]
    UnknownChunk(String),
    #[error("malformed rendered prompt: {0}")]
    Malformed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        let ctx = text.matches(CONTEXT_PLACEHOLDER).count();
        let code = text.matches(CODE_PLACEHOLDER).count();
        if ctx != 1 || code != 1 {
            return Err(PromptError::Template(format!(
                "expected exactly one {CONTEXT_PLACEHOLDER} and one {CODE_PLACEHOLDER}, found {ctx} and {code}"
            )));
        }
        if text.find(CONTEXT_PLACEHOLDER) > text.find(CODE_PLACEHOLDER) {
            return Err(PromptError::Template(format!(
                "{CONTEXT_PLACEHOLDER} must come before {CODE_PLACEHOLDER}"
            )));
        }
        if text.contains("<<<") {
            return Err(PromptError::Template("template must not contain `<<<`".into()));
        }
        Ok(Self { text })
    }

    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        Self::new(fs::read_to_string(path)?)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// The template with the emphasis clause prepended when it is missing.
    pub fn instruction(&self) -> String {
        if self.text.contains(EMPHASIS_CLAUSE) {
            self.text.clone()
        } else {
            format!("{EMPHASIS_CLAUSE}\n\n{}", self.text)
        }
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("shipped template is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBlock {
    pub chunk_id: String,
    pub rank: usize,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub instruction: String,
    pub context_blocks: Vec<ContextBlock>,
    pub serial_code: String,
    pub rendered: String,
    pub token_estimate: usize,
}

fn choose_tag<'a>(texts: impl Iterator<Item = &'a str> + Clone) -> String {
    (0u64..)
        .map(|n| format!("omprag-{n}"))
        .find(|tag| texts.clone().all(|t| !t.contains(tag.as_str())))
        .expect("some tag is unused")
}

pub fn build_prompt(
    serial_code: &str,
    hits: &[RetrievalHit],
    manifest: &CorpusManifest,
    template: &PromptTemplate,
) -> Result<PromptBundle, PromptError> {
    if serial_code.trim().is_empty() {
        return Err(PromptError::EmptyCode);
    }
    let mut sorted: Vec<&RetrievalHit> = hits.iter().collect();
    sorted.sort_by_key(|h| h.rank);
    let mut blocks = Vec::with_capacity(sorted.len());
    for hit in sorted {
        let chunk = manifest
            .get(&hit.chunk_id)
            .ok_or_else(|| PromptError::UnknownChunk(hit.chunk_id.clone()))?;
        if chunk.chunk_id.contains('\n') {
            return Err(PromptError::UnknownChunk(chunk.chunk_id.clone()));
        }
        blocks.push(ContextBlock {
            chunk_id: chunk.chunk_id.clone(),
            rank: hit.rank,
            body: chunk.body.clone(),
        });
    }

    let instruction = template.instruction();
    let texts = blocks
        .iter()
        .flat_map(|b| [b.body.as_str(), b.chunk_id.as_str()])
        .chain(std::iter::once(serial_code));
    let tag = choose_tag(texts);

    let context_section = if blocks.is_empty() {
        format!("<<<NO RETRIEVED CONTEXT {tag}>>>")
    } else {
        blocks
            .iter()
            .map(|b| {
                format!(
                    "<<<BEGIN CONTEXT {tag} rank={} chunk_id={}>>>\n{}\n<<<END CONTEXT {tag}>>>",
                    b.rank, b.chunk_id, b.body
                )
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    };
    let code_section = format!("<<<BEGIN SERIAL CODE {tag}>>>\n{serial_code}\n<<<END SERIAL CODE {tag}>>>");

    let (before_ctx, rest) = instruction
        .split_once(CONTEXT_PLACEHOLDER)
        .expect("validated template");
    let (between, after_code) = rest.split_once(CODE_PLACEHOLDER).expect("validated template");
    let rendered = format!("{before_ctx}{context_section}{between}{code_section}{after_code}");

    Ok(PromptBundle {
        instruction,
        token_estimate: estimate_tokens(&rendered),
        context_blocks: blocks,
        serial_code: serial_code.to_string(),
        rendered,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrompt {
    pub context_blocks: Vec<ContextBlock>,
    pub serial_code: String,
}

static FIRST_SENTINEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^<<<(?:BEGIN CONTEXT|NO RETRIEVED CONTEXT|BEGIN SERIAL CODE) (omprag-\d+)[ >]").unwrap()
});

/// Re-extracts the sections of a prompt produced by [`build_prompt`].
pub fn parse_rendered(rendered: &str) -> Result<ParsedPrompt, PromptError> {
    let malformed = |m: &str| PromptError::Malformed(m.to_string());
    let tag = FIRST_SENTINEL
        .captures(rendered)
        .map(|c| c[1].to_string())
        .ok_or_else(|| malformed("no section sentinel"))?;

    let begin_ctx = format!("<<<BEGIN CONTEXT {tag} rank=");
    let end_ctx = format!("\n<<<END CONTEXT {tag}>>>");
    let begin_code = format!("<<<BEGIN SERIAL CODE {tag}>>>\n");
    let end_code = format!("\n<<<END SERIAL CODE {tag}>>>");

    let mut blocks = Vec::new();
    let mut pos = 0;
    while let Some(off) = rendered[pos..].find(&begin_ctx) {
        let start = pos + off + begin_ctx.len();
        let line_end = rendered[start..]
            .find('\n')
            .map(|i| start + i)
            .ok_or_else(|| malformed("unterminated context header"))?;
        let header = rendered[start..line_end]
            .strip_suffix(">>>")
            .ok_or_else(|| malformed("bad context header"))?;
        let (rank, chunk_id) = header
            .split_once(" chunk_id=")
            .ok_or_else(|| malformed("context header without chunk_id"))?;
        let rank: usize = rank.parse().map_err(|_| malformed("bad rank"))?;
        let body_start = line_end + 1;
        let body_end = rendered[body_start - 1..]
            .find(&end_ctx)
            .map(|i| body_start - 1 + i)
            .ok_or_else(|| malformed("unterminated context block"))?;
        let body = if body_end < body_start { "" } else { &rendered[body_start..body_end] };
        blocks.push(ContextBlock {
            chunk_id: chunk_id.to_string(),
            rank,
            body: body.to_string(),
        });
        pos = body_end + end_ctx.len();
    }

    let code_start = rendered[pos..]
        .find(&begin_code)
        .map(|i| pos + i + begin_code.len())
        .ok_or_else(|| malformed("no serial code section"))?;
    let code_end = rendered[code_start - 1..]
        .find(&end_code)
        .map(|i| code_start - 1 + i)
        .ok_or_else(|| malformed("unterminated serial code section"))?;
    let serial_code = if code_end < code_start {
        String::new()
    } else {
        rendered[code_start..code_end].to_string()
    };
    Ok(ParsedPrompt {
        context_blocks: blocks,
        serial_code,
    })
}
