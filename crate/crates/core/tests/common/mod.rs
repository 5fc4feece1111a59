#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use omprag_core::corpus::{ingest_corpus, CorpusManifest};
use omprag_core::embed::LocalEmbedder;
use omprag_core::generate::ScriptedProvider;
use omprag_core::index::{build_index, FlatIndex};
use omprag_core::pipeline::{local_embedder_for, PipelineConfig, Profile};
use omprag_core::validate::CaseManifest;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn fixtures() -> PathBuf {
    repo_root().join("fixtures")
}

pub struct Rag {
    pub corpus: CorpusManifest,
    pub embedder: LocalEmbedder,
    pub index: FlatIndex,
}

pub fn shipped_rag() -> Rag {
    let corpus = ingest_corpus(&repo_root().join("corpus")).unwrap();
    let embedder = local_embedder_for(&corpus);
    let index = build_index(&corpus, &embedder).unwrap();
    Rag { corpus, embedder, index }
}

pub fn mini_manifest() -> CaseManifest {
    CaseManifest::load(&fixtures().join("mini/manifest.jsonl")).unwrap()
}

pub fn mini_config(profile: Profile) -> PipelineConfig {
    PipelineConfig {
        profile,
        workers: 2,
        ..PipelineConfig::default()
    }
}

/// Canned replies keyed by case id, read from `fixtures/mini/replies/<profile>/`.
pub fn canned_replies(profile: Profile) -> ScriptedProvider {
    let dir = fixtures().join("mini/replies").join(profile.as_str());
    let mut replies = HashMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let case = path.file_stem().unwrap().to_string_lossy().into_owned();
        replies.insert(case, fs::read_to_string(&path).unwrap());
    }
    ScriptedProvider::new(replies)
}

pub fn has_compiler() -> bool {
    std::process::Command::new("g++").arg("--version").output().is_ok_and(|o| o.status.success())
}
