//! Layered settings: TOML file, then `OMPRAG_*` environment variables, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use toml::{Table, Value};

use crate::GlobalArgs;

pub const ENV_PREFIX: &str = "OMPRAG_";

/// Every key accepted in the config file. Each can also be set through
/// `OMPRAG_<KEY>` (upper case); list values there may be comma-separated.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub profile: Option<String>,
    pub k: Option<usize>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub threads_sweep: Option<Vec<usize>>,
    pub diff_threads: Option<Vec<usize>>,
    pub repetitions: Option<usize>,
    pub replay_dir: Option<PathBuf>,
    pub record_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub corpus_manifest: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub max_tokens: Option<usize>,
    pub embedder: Option<String>,
    pub embed_model: Option<String>,
    pub embed_endpoint: Option<String>,
    pub chat_endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub template: Option<PathBuf>,
    pub compiler: Option<String>,
    pub compile_timeout_secs: Option<u64>,
    pub run_timeout_secs: Option<u64>,
    pub workers: Option<usize>,
    pub bench_lock: Option<PathBuf>,
    pub categories: Option<Vec<String>>,
    pub max_pages: Option<u32>,
    pub min_lines: Option<usize>,
    pub api_fixtures: Option<PathBuf>,
    pub keywords: Option<BTreeMap<String, String>>,
}

const KEYS: &[&str] = &[
    "profile",
    "k",
    "model",
    "temperature",
    "threads_sweep",
    "diff_threads",
    "repetitions",
    "replay_dir",
    "record_dir",
    "manifest",
    "out_dir",
    "corpus_dir",
    "corpus_manifest",
    "index",
    "max_tokens",
    "embedder",
    "embed_model",
    "embed_endpoint",
    "chat_endpoint",
    "api_key_env",
    "template",
    "compiler",
    "compile_timeout_secs",
    "run_timeout_secs",
    "workers",
    "bench_lock",
    "categories",
    "max_pages",
    "min_lines",
    "api_fixtures",
];
const LIST_KEYS: &[&str] = &["threads_sweep", "diff_threads", "categories"];
const NUMERIC_KEYS: &[&str] = &[
    "k",
    "temperature",
    "repetitions",
    "max_tokens",
    "compile_timeout_secs",
    "run_timeout_secs",
    "workers",
    "max_pages",
    "min_lines",
];

/// Reads an environment string as a TOML value. Paths and names stay strings
/// even when they look like numbers.
fn env_value(key: &str, raw: &str) -> Value {
    let scalar = |s: &str| {
        toml::from_str::<Table>(&format!("v = {s}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(s.to_string()))
    };
    if LIST_KEYS.contains(&key) {
        if raw.trim_start().starts_with('[') {
            return scalar(raw);
        }
        return Value::Array(raw.split(',').map(|p| scalar(p.trim())).collect());
    }
    if NUMERIC_KEYS.contains(&key) {
        return scalar(raw);
    }
    Value::String(raw.to_string())
}

pub fn env_layer(vars: impl IntoIterator<Item = (String, String)>) -> Table {
    let mut t = Table::new();
    for (name, raw) in vars {
        let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
        let key = key.to_ascii_lowercase();
        if KEYS.contains(&key.as_str()) {
            t.insert(key.clone(), env_value(&key, &raw));
        }
    }
    t
}

pub fn file_layer(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<Table>().with_context(|| format!("parsing config {}", path.display()))
}

/// Later layers win key by key.
pub fn merge(layers: &[Table]) -> Result<Settings> {
    let mut merged = Table::new();
    for layer in layers {
        for (k, v) in layer {
            merged.insert(k.clone(), v.clone());
        }
    }
    match Settings::deserialize(Value::Table(merged)) {
        Ok(s) => Ok(s),
        Err(e) => bail!("invalid settings: {e}"),
    }
}

fn flag_layer(g: &GlobalArgs) -> Table {
    let mut t = Table::new();
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            t.insert(k.to_string(), v);
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| Value::String(p.display().to_string()));
    put("profile", g.profile.clone().map(Value::String));
    put("k", g.k.map(|k| Value::Integer(k as i64)));
    put("model", g.model.clone().map(Value::String));
    put("temperature", g.temperature.map(Value::Float));
    put(
        "threads_sweep",
        g.threads_sweep.as_ref().map(|v| Value::Array(v.iter().map(|n| Value::Integer(*n as i64)).collect())),
    );
    put("replay_dir", path(&g.replay_dir));
    put("manifest", path(&g.manifest));
    put("out_dir", path(&g.out_dir));
    t
}

/// Config file (from `--config` or `OMPRAG_CONFIG`), environment, then flags.
pub fn load(g: &GlobalArgs) -> Result<Settings> {
    let file = g
        .config
        .clone()
        .or_else(|| std::env::var_os(format!("{ENV_PREFIX}CONFIG")).map(PathBuf::from));
    let mut layers = Vec::new();
    if let Some(f) = file {
        layers.push(file_layer(&f)?);
    }
    layers.push(env_layer(std::env::vars()));
    layers.push(flag_layer(g));
    merge(&layers)
}

impl Settings {
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn corpus_manifest(&self) -> PathBuf {
        self.corpus_manifest
            .clone()
            .unwrap_or_else(|| self.out_dir().join("corpus").join("manifest.jsonl"))
    }

    pub fn index_path(&self) -> PathBuf {
        self.index.clone().unwrap_or_else(|| self.out_dir().join("corpus").join("index.jsonl"))
    }

    pub fn bench_lock(&self) -> PathBuf {
        self.bench_lock
            .clone()
            .unwrap_or_else(|| std::env::temp_dir().join("omprag-bench.lock"))
    }
}
