//! Text embeddings behind a provider interface.
//!
//! [`LocalEmbedder`] is a feature-hashed TF-IDF embedder (512 signed buckets,
//! smoothed IDF fitted on a fixed corpus). It is deterministic and needs no
//! network. [`RemoteEmbedder`] speaks the common `{model, input}` ->
//! `{data: [{embedding}]}` wire format.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{is_retryable_status, HttpRequest, HttpTransport, RetryPolicy};

pub const LOCAL_DIMENSION: usize = 512;
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("embedding provider error (status {status:?}): {message}")]
    Provider { status: Option<u16>, message: String },
}

/// Unit-normalized embedding tagged with the provider that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    provider_tag: String,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit L2 norm.
    pub fn normalized(values: Vec<f64>, provider_tag: impl Into<String>) -> Result<Self, EmbedError> {
        check_components(&values)?;
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(EmbedError::InvalidInput("all-zero embedding".into()));
        }
        let values = values.into_iter().map(|v| v / norm).collect();
        Ok(Self {
            values,
            provider_tag: provider_tag.into(),
        })
    }

    /// Accepts values that are already unit-normalized, without touching them.
    pub fn from_unit(values: Vec<f64>, provider_tag: impl Into<String>) -> Result<Self, EmbedError> {
        check_components(&values)?;
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(EmbedError::InvalidInput(format!(
                "vector norm {norm} is not 1 within {UNIT_NORM_TOLERANCE}"
            )));
        }
        Ok(Self {
            values,
            provider_tag: provider_tag.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_components(values: &[f64]) -> Result<(), EmbedError> {
    if values.is_empty() {
        return Err(EmbedError::InvalidInput("embedding has dimension 0".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::InvalidInput("embedding has non-finite component".into()));
    }
    Ok(())
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dot product of two unit vectors from the same provider.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.dimension(),
            b.dimension()
        )));
    }
    if a.provider_tag != b.provider_tag {
        return Err(EmbedError::InvalidInput(format!(
            "provider mismatch: {} vs {}",
            a.provider_tag, b.provider_tag
        )));
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum())
}

pub trait EmbeddingProvider: Send + Sync {
    fn tag(&self) -> &str;

    /// Embeds text that has already been checked to be non-blank.
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::InvalidInput("cannot embed empty text".into()));
    }
    provider.embed_text(text)
}

/// Lowercased runs of alphanumerics and underscores.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Bucket index and sign for a term.
pub fn hash_term(term: &str, dimension: usize) -> (usize, f64) {
    let h = fnv1a64(term.as_bytes());
    let bucket = (h % dimension as u64) as usize;
    let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

#[derive(Debug, Clone)]
pub struct LocalEmbedder {
    dimension: usize,
    doc_freq: HashMap<String, u32>,
    n_docs: u32,
    tag: String,
}

impl LocalEmbedder {
    /// Fits document frequencies on `docs`.
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut doc_freq: HashMap<String, u32> = HashMap::new();
        let mut n_docs = 0u32;
        for doc in docs {
            n_docs += 1;
            let mut terms = tokenize(doc);
            terms.sort();
            terms.dedup();
            for t in terms {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
        let tag = local_tag(LOCAL_DIMENSION, &doc_freq, n_docs);
        Self {
            dimension: LOCAL_DIMENSION,
            doc_freq,
            n_docs,
            tag,
        }
    }

    /// Pure term-frequency embedder (every IDF weight is 1).
    pub fn unfitted() -> Self {
        Self::fit(std::iter::empty())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Smoothed IDF: `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, term: &str) -> f64 {
        let df = f64::from(self.doc_freq.get(term).copied().unwrap_or(0));
        let n = f64::from(self.n_docs);
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// Unnormalized signed hashed TF-IDF vector.
    pub fn raw_vector(&self, text: &str) -> Vec<f64> {
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokenize(text) {
            *counts.entry(t).or_default() += 1;
        }
        let mut values = vec![0.0; self.dimension];
        for (term, count) in &counts {
            let (bucket, sign) = hash_term(term, self.dimension);
            values[bucket] += sign * f64::from(*count) * self.idf(term);
        }
        values
    }
}

fn local_tag(dimension: usize, doc_freq: &HashMap<String, u32>, n_docs: u32) -> String {
    let mut terms: Vec<(&String, &u32)> = doc_freq.iter().collect();
    terms.sort();
    let mut h = Sha256::new();
    h.update(n_docs.to_le_bytes());
    for (t, df) in terms {
        h.update(t.as_bytes());
        h.update([0]);
        h.update(df.to_le_bytes());
    }
    format!("local-tfidf-{dimension}@{}", &hex::encode(h.finalize())[..12])
}

impl EmbeddingProvider for LocalEmbedder {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        EmbeddingVector::normalized(self.raw_vector(text), self.tag.clone())
            .map_err(|_| EmbedError::InvalidInput("text has no embeddable terms".into()))
    }
}

/// Counting semaphore bounding concurrent requests.
pub(crate) struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub(crate) fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl Default for RemoteEmbedderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/embeddings".into(),
            model: "text-embedding-ada-002".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    api_key: Option<String>,
    transport: Arc<dyn HttpTransport>,
    dimension: OnceLock<usize>,
    in_flight: Semaphore,
    tag: String,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig, transport: Arc<dyn HttpTransport>) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        Self::with_key(config, transport, api_key)
    }

    pub fn with_key(
        config: RemoteEmbedderConfig,
        transport: Arc<dyn HttpTransport>,
        api_key: Option<String>,
    ) -> Self {
        let tag = format!("remote:{}", config.model);
        let in_flight = Semaphore::new(config.max_in_flight);
        Self {
            config,
            api_key,
            transport,
            dimension: OnceLock::new(),
            in_flight,
            tag,
        }
    }

    /// Dimension learned from the first successful response.
    pub fn dimension(&self) -> Option<usize> {
        self.dimension.get().copied()
    }

    fn request_once(&self, text: &str) -> Result<Vec<f64>, (bool, EmbedError)> {
        let body = serde_json::json!({ "model": self.config.model, "input": [text] });
        let mut req = HttpRequest::post_json(&self.config.endpoint, &body).timeout(self.config.timeout);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = {
            let _permit = self.in_flight.acquire();
            self.transport.send(&req)
        };
        let resp = resp.map_err(|e| {
            (
                true,
                EmbedError::Provider {
                    status: None,
                    message: e.to_string(),
                },
            )
        })?;
        if !resp.is_success() {
            return Err((
                is_retryable_status(resp.status),
                EmbedError::Provider {
                    status: Some(resp.status),
                    message: truncate(&resp.body, 300),
                },
            ));
        }
        let parsed: EmbeddingResponse = serde_json::from_str(&resp.body).map_err(|e| {
            (
                false,
                EmbedError::Provider {
                    status: Some(resp.status),
                    message: format!("malformed embeddings response: {e}"),
                },
            )
        })?;
        parsed.data.into_iter().next().map(|d| d.embedding).ok_or((
            false,
            EmbedError::Provider {
                status: Some(resp.status),
                message: "embeddings response has no data".into(),
            },
        ))
    }
}

pub(crate) fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        s.to_string()
    } else {
        let mut end = max;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &s[..end])
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut last = None;
        for attempt in 1..=self.config.retry.attempts.max(1) {
            std::thread::sleep(self.config.retry.delay_before(attempt));
            match self.request_once(text) {
                Ok(values) => {
                    let expected = *self.dimension.get_or_init(|| values.len());
                    if values.len() != expected {
                        return Err(EmbedError::Provider {
                            status: None,
                            message: format!(
                                "embedding dimension changed from {expected} to {}",
                                values.len()
                            ),
                        });
                    }
                    return EmbeddingVector::normalized(values, self.tag.clone());
                }
                Err((retry, err)) => {
                    log::debug!("embedding attempt {attempt} failed: {err}");
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{HttpResponse, TransportError};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn v(values: &[f64], tag: &str) -> EmbeddingVector {
        EmbeddingVector::normalized(values.to_vec(), tag).unwrap()
    }

    #[test]
    fn cosine_identity_and_orthogonal() {
        let a = v(&[0.3, -0.2, 0.9], "t");
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let e1 = v(&[1.0, 0.0, 0.0], "t");
        let e2 = v(&[0.0, 1.0, 0.0], "t");
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
    }

    #[test]
    fn cosine_hand_computed() {
        // normalize([1,1,0]) . [1,0,0] = 1/sqrt(2)
        let a = v(&[1.0, 1.0, 0.0], "t");
        let b = v(&[1.0, 0.0, 0.0], "t");
        assert!((cosine_similarity(&a, &b).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_mismatch() {
        let a = v(&[1.0, 0.0], "t");
        let b = v(&[1.0, 0.0, 0.0], "t");
        assert!(matches!(cosine_similarity(&a, &b), Err(EmbedError::InvalidInput(_))));
        let c = v(&[1.0, 0.0], "other");
        assert!(matches!(cosine_similarity(&a, &c), Err(EmbedError::InvalidInput(_))));
    }

    #[test]
    fn zero_and_nonfinite_rejected() {
        assert!(EmbeddingVector::normalized(vec![0.0; 4], "t").is_err());
        assert!(EmbeddingVector::normalized(vec![1.0, f64::NAN], "t").is_err());
        assert!(EmbeddingVector::from_unit(vec![0.5, 0.5], "t").is_err());
    }

    #[test]
    fn local_embed_deterministic() {
        let e = LocalEmbedder::fit(["parallel for loop", "reduction clause sum"]);
        let a = embed("for (int i = 0; i < n; ++i) sum += a[i];", &e).unwrap();
        let b = embed("for (int i = 0; i < n; ++i) sum += a[i];", &e).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.dimension(), LOCAL_DIMENSION);
        let norm: f64 = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_terms_are_orthogonal() {
        let e = LocalEmbedder::unfitted();
        let a = embed("pragma omp", &e).unwrap();
        let b = embed("histogram bins", &e).unwrap();
        let buckets = |s: &str| tokenize(s).iter().map(|t| hash_term(t, LOCAL_DIMENSION).0).collect::<Vec<_>>();
        let (ba, bb) = (buckets("pragma omp"), buckets("histogram bins"));
        assert!(ba.iter().all(|x| !bb.contains(x)), "fixture terms collide");
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn empty_text_rejected() {
        let e = LocalEmbedder::unfitted();
        assert!(matches!(embed("", &e), Err(EmbedError::InvalidInput(_))));
        assert!(matches!(embed("   \n", &e), Err(EmbedError::InvalidInput(_))));
        assert!(matches!(embed("+= ;", &e), Err(EmbedError::InvalidInput(_))));
    }

    #[test]
    fn tag_tracks_fitted_corpus() {
        let a = LocalEmbedder::fit(["alpha beta"]);
        let b = LocalEmbedder::fit(["alpha beta"]);
        let c = LocalEmbedder::fit(["alpha gamma"]);
        assert_eq!(a.tag(), b.tag());
        assert_ne!(a.tag(), c.tag());
    }

    #[test]
    fn idf_weights_rare_terms_higher() {
        let e = LocalEmbedder::fit(["omp for", "omp reduction", "omp atomic"]);
        assert!(e.idf("atomic") > e.idf("omp"));
        assert!((e.idf("omp") - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cosine_symmetric(a in prop::collection::vec(-1.0f64..1.0, 8), b in prop::collection::vec(-1.0f64..1.0, 8)) {
            prop_assume!(a.iter().any(|x| *x != 0.0) && b.iter().any(|x| *x != 0.0));
            let a = v(&a, "t");
            let b = v(&b, "t");
            let ab = cosine_similarity(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine_similarity(&b, &a).unwrap());
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
        }

        #[test]
        fn normalizing_is_idempotent(text in "[a-z]{1,8}( [a-z]{1,8}){0,20}") {
            let e = LocalEmbedder::fit(["some corpus text", "more text here"]);
            let once = embed(&text, &e).unwrap();
            let twice = EmbeddingVector::normalized(once.values().to_vec(), e.tag()).unwrap();
            for (x, y) in once.values().iter().zip(twice.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    struct Scripted {
        responses: Mutex<Vec<Result<HttpResponse, TransportError>>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(mut responses: Vec<Result<HttpResponse, TransportError>>) -> Self {
            responses.reverse();
            Self {
                responses: Mutex::new(responses),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl HttpTransport for Scripted {
        fn send(&self, _: &HttpRequest) -> Result<HttpResponse, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.responses.lock().unwrap().pop().expect("script exhausted")
        }
    }

    fn ok(body: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: 200,
            headers: vec![],
            body: body.into(),
        })
    }

    fn status(code: u16) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: code,
            headers: vec![],
            body: "{\"error\":\"nope\"}".into(),
        })
    }

    fn fast() -> RemoteEmbedderConfig {
        RemoteEmbedderConfig {
            retry: RetryPolicy {
                attempts: 3,
                base_delay: Duration::from_millis(1),
            },
            ..Default::default()
        }
    }

    #[test]
    fn remote_retries_then_succeeds() {
        let t = Arc::new(Scripted::new(vec![
            status(503),
            ok(r#"{"data":[{"embedding":[3.0,4.0]}]}"#),
        ]));
        let r = RemoteEmbedder::with_key(fast(), t.clone(), Some("k".into()));
        let e = embed("hello", &r).unwrap();
        assert_eq!(e.values(), &[0.6, 0.8]);
        assert_eq!(r.dimension(), Some(2));
        assert_eq!(t.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn remote_auth_failure_not_retried() {
        let t = Arc::new(Scripted::new(vec![status(401)]));
        let r = RemoteEmbedder::with_key(fast(), t.clone(), None);
        match embed("hello", &r) {
            Err(EmbedError::Provider { status, .. }) => assert_eq!(status, Some(401)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn remote_enforces_dimension() {
        let t = Arc::new(Scripted::new(vec![
            ok(r#"{"data":[{"embedding":[1.0,0.0]}]}"#),
            ok(r#"{"data":[{"embedding":[1.0,0.0,0.0]}]}"#),
        ]));
        let r = RemoteEmbedder::with_key(fast(), t, None);
        embed("a", &r).unwrap();
        assert!(matches!(embed("b", &r), Err(EmbedError::Provider { .. })));
    }

    #[test]
    fn remote_gives_up_after_three_attempts() {
        let t = Arc::new(Scripted::new(vec![status(500), status(502), status(503)]));
        let r = RemoteEmbedder::with_key(fast(), t.clone(), None);
        match embed("x", &r) {
            Err(EmbedError::Provider { status, .. }) => assert_eq!(status, Some(503)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    }
}
