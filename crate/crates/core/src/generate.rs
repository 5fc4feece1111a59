//! Chat-completion generation with live, replay and recording providers.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed::{truncate, Semaphore};
use crate::http::{is_retryable_status, HttpRequest, HttpTransport, RetryPolicy};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_TEMPERATURE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("chat provider error (status {status:?}): {message}")]
    Provider { status: Option<u16>, message: String },
    #[error("no recorded reply for case {case_id} with prompt sha256 {prompt_sha256}")]
    ReplayMiss { case_id: String, prompt_sha256: String },
    #[error("replay store {path}: {message}")]
    Store { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model_name: String,
    pub temperature: f64,
    pub prompt: String,
    pub case_id: String,
}

impl GenerationRequest {
    pub fn new(case_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            model_name: DEFAULT_MODEL.into(),
            temperature: DEFAULT_TEMPERATURE,
            prompt: prompt.into(),
            case_id: case_id.into(),
        }
    }

    pub fn prompt_sha256(&self) -> String {
        prompt_sha256(&self.prompt)
    }
}

pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub case_id: String,
    pub raw_reply: String,
    pub extracted_code: Option<String>,
    #[serde(skip)]
    pub provider_latency: Duration,
    pub provider: String,
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError>;
}

/// Single-shot generation followed by code extraction.
pub fn generate(request: &GenerationRequest, provider: &dyn ChatProvider) -> Result<GenerationOutcome, GenerationError> {
    if request.prompt.trim().is_empty() {
        return Err(GenerationError::InvalidRequest("prompt is empty".into()));
    }
    if request.temperature.is_nan() || request.temperature < 0.0 {
        return Err(GenerationError::InvalidRequest(format!(
            "temperature must be >= 0, got {}",
            request.temperature
        )));
    }
    let start = Instant::now();
    let raw_reply = provider.complete(request)?;
    let provider_latency = start.elapsed();
    Ok(GenerationOutcome {
        case_id: request.case_id.clone(),
        extracted_code: extract_code(&raw_reply),
        raw_reply,
        provider_latency,
        provider: provider.name().to_string(),
    })
}

struct FencedBlock<'a> {
    label: String,
    content: &'a str,
}

fn fence_marker(line: &str) -> Option<(char, usize, &str)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let t = &line[indent..];
    let ch = t.chars().next()?;
    if ch != '`' && ch != '~' {
        return None;
    }
    let n = t.chars().take_while(|c| *c == ch).count();
    if n < 3 {
        return None;
    }
    Some((ch, n, t[n..].trim()))
}

fn fenced_blocks(text: &str) -> Vec<FencedBlock<'_>> {
    let mut blocks = Vec::new();
    let mut offset = 0;
    let mut open: Option<(char, usize, String, usize)> = None;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let bare = line.trim_end_matches(['\n', '\r']);
        match &open {
            None => {
                if let Some((ch, n, info)) = fence_marker(bare) {
                    if ch == '`' && info.contains('`') {
                        continue;
                    }
                    let label = info.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
                    open = Some((ch, n, label, offset));
                }
            }
            Some((ch, n, _, _)) => {
                if let Some((c2, n2, info)) = fence_marker(bare) {
                    if c2 == *ch && n2 >= *n && info.is_empty() {
                        let (_, _, label, start) = open.take().unwrap();
                        blocks.push(FencedBlock {
                            label,
                            content: &text[start..line_start],
                        });
                    }
                }
            }
        }
    }
    if let Some((_, _, label, start)) = open {
        blocks.push(FencedBlock {
            label,
            content: &text[start..],
        });
    }
    blocks
}

/// Interior of the first fenced block labelled cpp/c++/c, else of the longest
/// fenced block, else `None`. Blocks with blank interiors are ignored.
pub fn extract_code(raw_reply: &str) -> Option<String> {
    let blocks: Vec<FencedBlock> = fenced_blocks(raw_reply)
        .into_iter()
        .filter(|b| !b.content.trim().is_empty())
        .collect();
    if let Some(b) = blocks.iter().find(|b| matches!(b.label.as_str(), "cpp" | "c++" | "c")) {
        return Some(b.content.to_string());
    }
    let mut best: Option<&FencedBlock> = None;
    for b in &blocks {
        if best.is_none_or(|cur| b.content.len() > cur.content.len()) {
            best = Some(b);
        }
    }
    best.map(|b| b.content.to_string())
}

#[derive(Debug, Clone)]
pub struct LiveChatConfig {
    pub endpoint: String,
    pub api_key_env: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl Default for LiveChatConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

/// Chat-completions over HTTP; the whole prompt goes in a single user message.
pub struct LiveChatProvider {
    config: LiveChatConfig,
    api_key: Option<String>,
    transport: Arc<dyn HttpTransport>,
    in_flight: Semaphore,
}

impl LiveChatProvider {
    pub fn new(config: LiveChatConfig, transport: Arc<dyn HttpTransport>) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        Self::with_key(config, transport, api_key)
    }

    pub fn with_key(config: LiveChatConfig, transport: Arc<dyn HttpTransport>, api_key: Option<String>) -> Self {
        let in_flight = Semaphore::new(config.max_in_flight);
        Self {
            config,
            api_key,
            transport,
            in_flight,
        }
    }

    fn attempt(&self, request: &GenerationRequest) -> Result<String, (bool, GenerationError)> {
        let body = serde_json::json!({
            "model": request.model_name,
            "temperature": request.temperature,
            "messages": [{ "role": "user", "content": request.prompt }],
        });
        let mut http = HttpRequest::post_json(&self.config.endpoint, &body).timeout(self.config.timeout);
        if let Some(key) = &self.api_key {
            http = http.header("Authorization", format!("Bearer {key}"));
        }
        let resp = {
            let _permit = self.in_flight.acquire();
            self.transport.send(&http)
        }
        .map_err(|e| {
            (
                true,
                GenerationError::Provider {
                    status: None,
                    message: e.to_string(),
                },
            )
        })?;
        if !resp.is_success() {
            return Err((
                is_retryable_status(resp.status),
                GenerationError::Provider {
                    status: Some(resp.status),
                    message: truncate(&resp.body, 300),
                },
            ));
        }
        let parsed: ChatResponse = serde_json::from_str(&resp.body).map_err(|e| {
            (
                false,
                GenerationError::Provider {
                    status: Some(resp.status),
                    message: format!("malformed chat response: {e}"),
                },
            )
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or((
                false,
                GenerationError::Provider {
                    status: Some(resp.status),
                    message: "chat response has no message content".into(),
                },
            ))
    }
}

impl ChatProvider for LiveChatProvider {
    fn name(&self) -> &str {
        "live"
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let mut last = None;
        for attempt in 1..=self.config.retry.attempts.max(1) {
            std::thread::sleep(self.config.retry.delay_before(attempt));
            match self.attempt(request) {
                Ok(reply) => return Ok(reply),
                Err((retry, err)) => {
                    log::debug!("case {} attempt {attempt} failed: {err}", request.case_id);
                    last = Some(err);
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// One recorded reply, stored as `<case_id>-<sha prefix>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub case_id: String,
    pub prompt_sha256: String,
    pub raw_reply: String,
}

impl ReplayRecord {
    pub fn file_name(&self) -> String {
        let safe: String = self
            .case_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{safe}-{}.json", &self.prompt_sha256[..16.min(self.prompt_sha256.len())])
    }

    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, GenerationError> {
        let store_err = |m: String| GenerationError::Store {
            path: dir.to_path_buf(),
            message: m,
        };
        fs::create_dir_all(dir).map_err(|e| store_err(e.to_string()))?;
        let path = dir.join(self.file_name());
        let text = serde_json::to_string_pretty(self).expect("record serializes");
        fs::write(&path, text + "\n").map_err(|e| store_err(e.to_string()))?;
        Ok(path)
    }
}

#[derive(Debug, Default, Clone)]
pub struct ReplayStore {
    records: HashMap<(String, String), String>,
}

impl ReplayStore {
    pub fn load(dir: &Path) -> Result<Self, GenerationError> {
        let store_err = |path: &Path, m: String| GenerationError::Store {
            path: path.to_path_buf(),
            message: m,
        };
        let mut records = HashMap::new();
        let entries = fs::read_dir(dir).map_err(|e| store_err(dir, e.to_string()))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|e| store_err(&path, e.to_string()))?;
            let rec: ReplayRecord = serde_json::from_str(&text).map_err(|e| store_err(&path, e.to_string()))?;
            records.insert((rec.case_id, rec.prompt_sha256), rec.raw_reply);
        }
        Ok(Self { records })
    }

    pub fn insert(&mut self, record: ReplayRecord) {
        self.records
            .insert((record.case_id, record.prompt_sha256), record.raw_reply);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, case_id: &str, prompt_sha256: &str) -> Option<&str> {
        self.records
            .get(&(case_id.to_string(), prompt_sha256.to_string()))
            .map(String::as_str)
    }
}

/// Serves recorded replies keyed by (case_id, prompt sha256). Never touches the network.
pub struct ReplayProvider {
    store: ReplayStore,
}

impl ReplayProvider {
    pub fn new(store: ReplayStore) -> Self {
        Self { store }
    }

    pub fn from_dir(dir: &Path) -> Result<Self, GenerationError> {
        Ok(Self::new(ReplayStore::load(dir)?))
    }
}

impl ChatProvider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let sha = request.prompt_sha256();
        self.store
            .lookup(&request.case_id, &sha)
            .map(str::to_string)
            .ok_or(GenerationError::ReplayMiss {
                case_id: request.case_id.clone(),
                prompt_sha256: sha,
            })
    }
}

/// Passes requests to `inner` and records every reply into a replay directory.
pub struct RecordingProvider<P> {
    inner: P,
    dir: PathBuf,
    lock: Mutex<()>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
            lock: Mutex::new(()),
        }
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let reply = self.inner.complete(request)?;
        let record = ReplayRecord {
            case_id: request.case_id.clone(),
            prompt_sha256: request.prompt_sha256(),
            raw_reply: reply.clone(),
        };
        let _guard = self.lock.lock().unwrap();
        record.write_to(&self.dir)?;
        Ok(reply)
    }
}

/// Fixed reply per case_id, regardless of prompt. Used to author fixtures.
pub struct ScriptedProvider {
    replies: HashMap<String, String>,
}

impl ScriptedProvider {
    pub fn new(replies: HashMap<String, String>) -> Self {
        Self { replies }
    }
}

impl ChatProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        self.replies
            .get(&request.case_id)
            .cloned()
            .ok_or(GenerationError::ReplayMiss {
                case_id: request.case_id.clone(),
                prompt_sha256: request.prompt_sha256(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{DenyNetwork, HttpResponse, TransportError};
    use proptest::prelude::*;

    #[test]
    fn extracts_cpp_block() {
        let reply = "Here you go:\n```cpp\nint main() {}\n```\nDone.";
        assert_eq!(extract_code(reply).as_deref(), Some("int main() {}\n"));
    }

    #[test]
    fn label_beats_length() {
        let long: String = (0..10).map(|i| format!("line {i}\n")).collect();
        let short: String = (0..5).map(|i| format!("int x{i};\n")).collect();
        let reply = format!("```\n{long}```\n\n```cpp\n{short}```\n");
        assert_eq!(extract_code(&reply), Some(short));
    }

    #[test]
    fn longest_unlabelled_block() {
        let reply = "```\na\n```\n```text\nbbbb\nbbbb\n```\n";
        assert_eq!(extract_code(reply).as_deref(), Some("bbbb\nbbbb\n"));
    }

    #[test]
    fn no_fences_is_absent() {
        assert_eq!(extract_code("int main() { return 0; }"), None);
        assert_eq!(extract_code("```cpp\n\n```"), None);
    }

    #[test]
    fn labels_are_case_insensitive() {
        assert_eq!(extract_code("```C++\nx;\n```").as_deref(), Some("x;\n"));
        assert_eq!(extract_code("~~~c\ny;\n~~~").as_deref(), Some("y;\n"));
    }

    #[test]
    fn unterminated_block_runs_to_end() {
        assert_eq!(extract_code("```cpp\nint a;\nint b;").as_deref(), Some("int a;\nint b;"));
    }

    proptest! {
        #[test]
        fn extraction_is_idempotent(lines in prop::collection::vec("[a-z0-9 ;{}()#<>+=*]{1,30}", 1..15)) {
            let interior: String = lines.iter().map(|l| format!("{l}\n")).collect();
            prop_assume!(!interior.trim().is_empty());
            let first = extract_code(&format!("intro\n```cpp\n{interior}```\ntrailer")).unwrap();
            prop_assert_eq!(&first, &interior);
            let again = extract_code(&format!("```cpp\n{first}```\n")).unwrap();
            prop_assert_eq!(again, first);
        }
    }

    fn store_with(case: &str, prompt: &str, reply: &str) -> ReplayStore {
        let mut s = ReplayStore::default();
        s.insert(ReplayRecord {
            case_id: case.into(),
            prompt_sha256: prompt_sha256(prompt),
            raw_reply: reply.into(),
        });
        s
    }

    #[test]
    fn replay_returns_recorded_bytes() {
        let reply = "```cpp\nint main() {}\n```\r\n";
        let p = ReplayProvider::new(store_with("case1", "PROMPT", reply));
        let out = generate(&GenerationRequest::new("case1", "PROMPT"), &p).unwrap();
        assert_eq!(out.raw_reply.as_bytes(), reply.as_bytes());
        assert_eq!(out.extracted_code.as_deref(), Some("int main() {}\n"));
        assert_eq!(out.provider, "replay");
    }

    #[test]
    fn replay_detects_prompt_drift() {
        let p = ReplayProvider::new(store_with("case1", "PROMPT", "x"));
        let err = generate(&GenerationRequest::new("case1", "PROMPt"), &p).unwrap_err();
        assert!(matches!(err, GenerationError::ReplayMiss { case_id, .. } if case_id == "case1"));
    }

    #[test]
    fn replay_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rec = ReplayRecord {
            case_id: "case 7/x".into(),
            prompt_sha256: prompt_sha256("p"),
            raw_reply: "r".into(),
        };
        rec.write_to(dir.path()).unwrap();
        let store = ReplayStore::load(dir.path()).unwrap();
        assert_eq!(store.lookup("case 7/x", &prompt_sha256("p")), Some("r"));
    }

    #[test]
    fn recording_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let scripted = ScriptedProvider::new(HashMap::from([("c1".to_string(), "```c\nx;\n```".to_string())]));
        let rec = RecordingProvider::new(scripted, dir.path());
        let req = GenerationRequest::new("c1", "prompt text");
        let live = generate(&req, &rec).unwrap();
        let replay = ReplayProvider::from_dir(dir.path()).unwrap();
        let again = generate(&req, &replay).unwrap();
        assert_eq!(live.raw_reply, again.raw_reply);
    }

    #[test]
    fn empty_prompt_and_negative_temperature() {
        let p = ReplayProvider::new(ReplayStore::default());
        assert!(matches!(
            generate(&GenerationRequest::new("c", "  "), &p),
            Err(GenerationError::InvalidRequest(_))
        ));
        let mut req = GenerationRequest::new("c", "p");
        req.temperature = -0.1;
        assert!(matches!(generate(&req, &p), Err(GenerationError::InvalidRequest(_))));
    }

    #[test]
    fn defaults_match_experiment_settings() {
        let r = GenerationRequest::new("c", "p");
        assert_eq!(r.temperature, 0.2);
        assert_eq!(r.model_name, "gpt-3.5-turbo");
    }

    struct Fixed(u16, &'static str);
    impl HttpTransport for Fixed {
        fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
            let body: serde_json::Value = serde_json::from_str(req.body.as_deref().unwrap()).unwrap();
            assert_eq!(body["messages"][0]["role"], "user");
            assert_eq!(body["temperature"], 0.2);
            Ok(HttpResponse {
                status: self.0,
                headers: vec![],
                body: self.1.into(),
            })
        }
    }

    fn fast_config() -> LiveChatConfig {
        LiveChatConfig {
            retry: RetryPolicy {
                attempts: 3,
                base_delay: Duration::from_millis(1),
            },
            ..Default::default()
        }
    }

    #[test]
    fn live_parses_choice() {
        let t = Arc::new(Fixed(200, r#"{"choices":[{"message":{"role":"assistant","content":"```cpp\nok;\n```"}}]}"#));
        let p = LiveChatProvider::with_key(fast_config(), t, Some("k".into()));
        let out = generate(&GenerationRequest::new("c", "p"), &p).unwrap();
        assert_eq!(out.extracted_code.as_deref(), Some("ok;\n"));
    }

    #[test]
    fn live_401_is_provider_error() {
        let t = Arc::new(Fixed(401, r#"{"error":{"message":"bad key"}}"#));
        let p = LiveChatProvider::with_key(fast_config(), t, None);
        match generate(&GenerationRequest::new("c", "p"), &p) {
            Err(GenerationError::Provider { status, .. }) => assert_eq!(status, Some(401)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn live_transport_failure_after_retries() {
        let t = Arc::new(DenyNetwork::new());
        let p = LiveChatProvider::with_key(fast_config(), t.clone(), None);
        assert!(matches!(
            generate(&GenerationRequest::new("c", "p"), &p),
            Err(GenerationError::Provider { status: None, .. })
        ));
        assert_eq!(t.attempts(), 3);
    }
}
