use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{HarvestCategory, HarvestError};
use crate::http::{HttpRequest, HttpTransport};

/// One accepted answer as returned by the Q&A API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub answer_id: u64,
    pub link: String,
    /// HTML body.
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPage {
    pub items: Vec<Answer>,
    pub has_more: bool,
}

/// Source of accepted answers, one page at a time (pages start at 1).
pub trait QaApi {
    fn fetch_page(&self, category: HarvestCategory, page: u32) -> Result<AnswerPage, HarvestError>;
}

impl<A: QaApi + ?Sized> QaApi for Box<A> {
    fn fetch_page(&self, category: HarvestCategory, page: u32) -> Result<AnswerPage, HarvestError> {
        (**self).fetch_page(category, page)
    }
}

/// Recorded pages stored as `<dir>/<category_slug>/page<N>.json`.
#[derive(Debug, Clone)]
pub struct FixtureQaApi {
    dir: PathBuf,
}

impl FixtureQaApi {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn page_path(dir: &Path, category: HarvestCategory, page: u32) -> PathBuf {
        dir.join(category.slug()).join(format!("page{page}.json"))
    }
}

impl QaApi for FixtureQaApi {
    fn fetch_page(&self, category: HarvestCategory, page: u32) -> Result<AnswerPage, HarvestError> {
        let path = Self::page_path(&self.dir, category, page);
        let text = fs::read_to_string(&path).map_err(|_| HarvestError::ReplayMiss { path: path.clone() })?;
        serde_json::from_str(&text).map_err(|e| HarvestError::Format {
            path,
            message: e.to_string(),
        })
    }
}

/// Wraps another API and writes every page it returns as a fixture.
pub struct RecordingQaApi<A> {
    inner: A,
    dir: PathBuf,
}

impl<A: QaApi> RecordingQaApi<A> {
    pub fn new(inner: A, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into() }
    }
}

impl<A: QaApi> QaApi for RecordingQaApi<A> {
    fn fetch_page(&self, category: HarvestCategory, page: u32) -> Result<AnswerPage, HarvestError> {
        let result = self.inner.fetch_page(category, page)?;
        let path = FixtureQaApi::page_path(&self.dir, category, page);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, serde_json::to_string_pretty(&result).expect("page serializes") + "\n")?;
        Ok(result)
    }
}

#[derive(Debug, Clone)]
pub struct StackExchangeConfig {
    pub base_url: String,
    pub site: String,
    pub tag: String,
    pub page_size: u32,
    /// Environment variable holding an optional app key (raises the quota).
    pub api_key_env: String,
    pub timeout: Duration,
    /// Query string per category; categories not listed use their default keywords.
    pub keywords: BTreeMap<HarvestCategory, String>,
}

impl Default for StackExchangeConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.stackexchange.com/2.3".into(),
            site: "stackoverflow".into(),
            tag: "c++".into(),
            page_size: 30,
            api_key_env: "STACKEXCHANGE_KEY".into(),
            timeout: Duration::from_secs(30),
            keywords: BTreeMap::new(),
        }
    }
}

#[derive(Deserialize)]
struct SeWrapper<T> {
    #[serde(default = "Vec::new")]
    items: Vec<T>,
    #[serde(default)]
    has_more: bool,
    #[serde(default)]
    backoff: Option<u64>,
}

#[derive(Deserialize)]
struct SeQuestion {
    accepted_answer_id: Option<u64>,
}

#[derive(Deserialize)]
struct SeAnswer {
    answer_id: u64,
    #[serde(default)]
    body: String,
}

/// Live Stack Exchange client: votes-ordered question search restricted to
/// questions with an accepted answer, then one batched call for the answer bodies.
pub struct StackExchangeApi {
    config: StackExchangeConfig,
    transport: Arc<dyn HttpTransport>,
    key: Option<String>,
}

impl StackExchangeApi {
    pub fn new(config: StackExchangeConfig, transport: Arc<dyn HttpTransport>) -> Self {
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self { config, transport, key }
    }

    fn keywords(&self, category: HarvestCategory) -> String {
        self.config
            .keywords
            .get(&category)
            .cloned()
            .unwrap_or_else(|| category.default_keywords().to_string())
    }

    fn get<T: for<'de> Deserialize<'de>>(&self, path: &str, params: &[(&str, String)]) -> Result<SeWrapper<T>, HarvestError> {
        let mut params: Vec<(&str, String)> = params.to_vec();
        params.push(("site", self.config.site.clone()));
        if let Some(k) = &self.key {
            params.push(("key", k.clone()));
        }
        let url = url::Url::parse_with_params(&format!("{}{path}", self.config.base_url), &params)
            .map_err(|e| HarvestError::InvalidInput(format!("bad API url: {e}")))?;
        let req = HttpRequest::get(url.as_str()).timeout(self.config.timeout);
        let resp = self.transport.send(&req).map_err(|e| HarvestError::Fetch {
            message: e.to_string(),
            advice: None,
        })?;
        if resp.status == 429 || resp.body.contains("throttle_violation") {
            let wait = resp.header("retry-after").unwrap_or("a few minutes");
            return Err(HarvestError::Fetch {
                message: format!("API quota exceeded (HTTP {})", resp.status),
                advice: Some(format!("back off and retry after {wait}; setting {} raises the quota", self.config.api_key_env)),
            });
        }
        if !resp.is_success() {
            return Err(HarvestError::Fetch {
                message: format!("HTTP {}: {}", resp.status, crate::embed::truncate(&resp.body, 200)),
                advice: None,
            });
        }
        let parsed: SeWrapper<T> = serde_json::from_str(&resp.body).map_err(|e| HarvestError::Fetch {
            message: format!("unexpected API response: {e}"),
            advice: None,
        })?;
        if let Some(secs) = parsed.backoff {
            log::warn!("API requested a {secs}s backoff");
            std::thread::sleep(Duration::from_secs(secs));
        }
        Ok(parsed)
    }
}

impl QaApi for StackExchangeApi {
    fn fetch_page(&self, category: HarvestCategory, page: u32) -> Result<AnswerPage, HarvestError> {
        let questions: SeWrapper<SeQuestion> = self.get(
            "/search/advanced",
            &[
                ("order", "desc".into()),
                ("sort", "votes".into()),
                ("accepted", "True".into()),
                ("tagged", self.config.tag.clone()),
                ("q", self.keywords(category)),
                ("page", page.to_string()),
                ("pagesize", self.config.page_size.to_string()),
            ],
        )?;
        let ids: Vec<u64> = questions.items.iter().filter_map(|q| q.accepted_answer_id).collect();
        if ids.is_empty() {
            return Ok(AnswerPage {
                items: Vec::new(),
                has_more: questions.has_more,
            });
        }
        let joined = ids.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
        let answers: SeWrapper<SeAnswer> = self.get(
            &format!("/answers/{joined}"),
            &[("filter", "withbody".into()), ("pagesize", "100".into())],
        )?;
        let mut by_id: BTreeMap<u64, String> = answers.items.into_iter().map(|a| (a.answer_id, a.body)).collect();
        // keep the question search's vote order
        let items = ids
            .into_iter()
            .filter_map(|id| {
                by_id.remove(&id).map(|body| Answer {
                    answer_id: id,
                    link: format!("https://stackoverflow.com/a/{id}"),
                    body,
                })
            })
            .collect();
        Ok(AnswerPage {
            items,
            has_more: questions.has_more,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{HttpResponse, TransportError};
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<HttpResponse>>,
        seen: Mutex<Vec<String>>,
    }

    impl HttpTransport for Scripted {
        fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
            self.seen.lock().unwrap().push(request.url.clone());
            Ok(self.replies.lock().unwrap().remove(0))
        }
    }

    fn ok(body: &str) -> HttpResponse {
        HttpResponse {
            status: 200,
            headers: vec![],
            body: body.into(),
        }
    }

    #[test]
    fn two_step_fetch_keeps_vote_order() {
        let t = Arc::new(Scripted {
            replies: Mutex::new(vec![
                ok(r#"{"items":[{"accepted_answer_id":7},{"question_id":1},{"accepted_answer_id":3}],"has_more":true}"#),
                ok(r#"{"items":[{"answer_id":3,"body":"<p>b</p>"},{"answer_id":7,"body":"<p>a</p>"}],"has_more":false}"#),
            ]),
            seen: Mutex::new(vec![]),
        });
        let api = StackExchangeApi {
            config: StackExchangeConfig::default(),
            transport: t.clone(),
            key: None,
        };
        let page = api.fetch_page(HarvestCategory::Histogram, 2).unwrap();
        assert_eq!(page.items.iter().map(|a| a.answer_id).collect::<Vec<_>>(), vec![7, 3]);
        assert!(page.has_more);
        let seen = t.seen.lock().unwrap();
        assert!(seen[0].contains("page=2") && seen[0].contains("tagged=c%2B%2B") && seen[0].contains("accepted=True"));
        assert!(seen[1].contains("/answers/7%3B3") || seen[1].contains("/answers/7;3"));
    }

    #[test]
    fn quota_error_carries_advice() {
        let t = Arc::new(Scripted {
            replies: Mutex::new(vec![HttpResponse {
                status: 429,
                headers: vec![("retry-after".into(), "60".into())],
                body: String::new(),
            }]),
            seen: Mutex::new(vec![]),
        });
        let api = StackExchangeApi {
            config: StackExchangeConfig::default(),
            transport: t,
            key: None,
        };
        match api.fetch_page(HarvestCategory::DotProduct, 1) {
            Err(HarvestError::Fetch { advice: Some(a), .. }) => assert!(a.contains("60")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fixture_miss() {
        let dir = tempfile::tempdir().unwrap();
        let api = FixtureQaApi::new(dir.path());
        assert!(matches!(api.fetch_page(HarvestCategory::Quicksort, 1), Err(HarvestError::ReplayMiss { .. })));
    }
}
