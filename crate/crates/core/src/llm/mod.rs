//! LLM access: prompt construction, a chat-completion HTTP backend, a
//! deterministic mock backend, and reply parsing with bounded retries.

#[cfg(feature = "http")]
mod http;
mod mock;
mod parse;
pub mod prompts;

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{mock_judgment, MockBackend};
pub use parse::{parse_direct_score, parse_judgment, Judgment, ScoreParse};

/// Overrides the HTTP endpoint from the environment.
pub const ENV_LLM_URL: &str = "ENTSCORE_LLM_URL";
/// Optional bearer token for the HTTP endpoint.
pub const ENV_LLM_TOKEN: &str = "ENTSCORE_LLM_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "http" => Ok(Self::Http),
            "mock" => Ok(Self::Mock),
            other => Err(format!("unknown LLM backend {other:?} (http|mock)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub backend: BackendKind,
    /// Base URL of an OpenAI-style API, e.g. `http://localhost:8000/v1`.
    pub base_url: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: f64,
    /// Upper bound on requests in flight through one gateway.
    pub max_in_flight: usize,
    #[serde(skip_serializing)]
    pub api_token: Option<String>,
    pub seed: Option<u64>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            base_url: None,
            model_name: "llama-3.1-8b-instruct".into(),
            temperature: 0.0,
            max_retries: 3,
            timeout_secs: 120.0,
            max_in_flight: 4,
            api_token: None,
            seed: None,
        }
    }
}

impl LlmConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn http(base_url: impl Into<String>) -> Self {
        Self { backend: BackendKind::Http, base_url: Some(base_url.into()), ..Self::default() }
    }

    /// Applies `ENTSCORE_LLM_URL` / `ENTSCORE_LLM_TOKEN` when set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(ENV_LLM_URL) {
            if !url.is_empty() {
                self.base_url = Some(url);
            }
        }
        if let Ok(token) = std::env::var(ENV_LLM_TOKEN) {
            if !token.is_empty() {
                self.api_token = Some(token);
            }
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(LlmError::Config("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be >= 1".into()));
        }
        if self.backend == BackendKind::Http && self.base_url.as_deref().is_none_or(str::is_empty) {
            return Err(LlmError::Config(format!("HTTP backend needs a base URL (or set {ENV_LLM_URL})")));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    fn attempts(&self) -> u32 {
        self.max_retries + 1
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid LLM configuration: {0}")]
    Config(String),
    #[error("backend {0:?} is not compiled into this build")]
    BackendUnavailable(BackendKind),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("unparseable reply after {attempts} attempts: {reply:?}")]
    Unparseable { attempts: u32, reply: String },
    #[error("score out of range: {0}")]
    ScoreOutOfRange(f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// One logical request to the model. The HTTP backend sends
/// [`Request::prompt`]; the mock answers from the structured fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Request<'a> {
    Raw(&'a str),
    EntityContext { entity: &'a str, report1: &'a str, report2: &'a str },
    DirectScore { report1: &'a str, report2: &'a str },
    Explain { score: f64, report1: &'a str, report2: &'a str },
    Negation { report: &'a str },
}

impl Request<'_> {
    pub fn prompt(&self) -> String {
        match *self {
            Request::Raw(p) => p.to_string(),
            Request::EntityContext { entity, report1, report2 } => prompts::entity_context(entity, report1, report2),
            Request::DirectScore { report1, report2 } => prompts::direct_similarity(report1, report2),
            Request::Explain { score, report1, report2 } => prompts::explain_score(score, report1, report2),
            Request::Negation { report } => prompts::negation_variant(report),
        }
    }
}

/// A source of completions.
pub trait Completion: Send + Sync {
    fn complete(&self, request: &Request<'_>) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextJudgment {
    pub value: Judgment,
    pub raw_reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectScore {
    pub score: f64,
    pub reasoning: String,
}

struct InFlight {
    limit: usize,
    count: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap_or_else(|p| p.into_inner()) -= 1;
        self.0.freed.notify_one();
    }
}

/// Entry point for every model call made by the engine.
pub struct LlmGateway {
    config: LlmConfig,
    backend: Box<dyn Completion>,
    in_flight: InFlight,
}

impl std::fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmGateway").field("config", &self.config).finish_non_exhaustive()
    }
}

impl LlmGateway {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let backend: Box<dyn Completion> = match config.backend {
            BackendKind::Mock => Box::new(MockBackend),
            #[cfg(feature = "http")]
            BackendKind::Http => Box::new(http::HttpBackend::new(&config)),
            #[cfg(not(feature = "http"))]
            BackendKind::Http => return Err(LlmError::BackendUnavailable(BackendKind::Http)),
        };
        Ok(Self::with_backend(config, backend))
    }

    pub fn mock() -> Self {
        Self::new(LlmConfig::mock()).expect("default mock config is valid")
    }

    /// Uses a caller-supplied backend, e.g. a scripted one in tests.
    pub fn with_backend(config: LlmConfig, backend: Box<dyn Completion>) -> Self {
        let in_flight = InFlight { limit: config.max_in_flight.max(1), count: Mutex::new(0), freed: Condvar::new() };
        Self { config, backend, in_flight }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn complete(&self, request: &Request<'_>) -> Result<String, LlmError> {
        let _slot = self.in_flight.acquire();
        self.backend.complete(request)
    }

    /// A single free-form completion.
    pub fn chat(&self, prompt: &str) -> Result<String, LlmError> {
        self.complete(&Request::Raw(prompt))
    }

    /// Asks whether `entity` is used in the same context in both reports.
    /// Unparseable replies are retried with the same prompt.
    pub fn judge_entity_context(
        &self,
        entity: &str,
        final_text: &str,
        prelim_text: &str,
    ) -> Result<ContextJudgment, LlmError> {
        for (label, report) in [("final", final_text), ("preliminary", prelim_text)] {
            if !mock::mentions(report, entity) {
                return Err(LlmError::Precondition(format!("entity {entity:?} does not occur in the {label} report")));
            }
        }
        let request = Request::EntityContext { entity, report1: final_text, report2: prelim_text };
        let mut last = String::new();
        for attempt in 1..=self.config.attempts() {
            last = self.complete(&request)?;
            if let Some(value) = parse_judgment(&last) {
                return Ok(ContextJudgment { value, raw_reply: last });
            }
            log::debug!("attempt {attempt}: unparseable judgment {last:?} for {entity:?}");
        }
        Err(LlmError::Unparseable { attempts: self.config.attempts(), reply: last })
    }

    /// The model's own 0-10 similarity score for the pair.
    pub fn direct_similarity(&self, final_text: &str, prelim_text: &str) -> Result<DirectScore, LlmError> {
        if final_text.trim().is_empty() || prelim_text.trim().is_empty() {
            return Err(LlmError::Precondition("both reports must be non-empty".into()));
        }
        let request = Request::DirectScore { report1: final_text, report2: prelim_text };
        let mut last = String::new();
        for _ in 0..self.config.attempts() {
            last = self.complete(&request)?;
            if let ScoreParse::Parsed { score, reasoning } = parse_direct_score(&last) {
                if !(0.0..=10.0).contains(&score) {
                    return Err(LlmError::ScoreOutOfRange(score));
                }
                return Ok(DirectScore { score, reasoning });
            }
        }
        Err(LlmError::Unparseable { attempts: self.config.attempts(), reply: last })
    }

    /// Free-text explanation of an already computed score.
    pub fn explain_score(&self, score: f64, final_text: &str, prelim_text: &str) -> Result<String, LlmError> {
        if final_text.trim().is_empty() || prelim_text.trim().is_empty() {
            return Err(LlmError::Precondition("both reports must be non-empty".into()));
        }
        self.complete(&Request::Explain { score, report1: final_text, report2: prelim_text })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Replays canned replies in order, then repeats the last one.
    struct Scripted {
        replies: Vec<&'static str>,
        calls: Arc<AtomicUsize>,
    }

    impl Completion for Scripted {
        fn complete(&self, _: &Request<'_>) -> Result<String, LlmError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.replies[i.min(self.replies.len() - 1)].to_string())
        }
    }

    fn scripted(replies: Vec<&'static str>) -> (LlmGateway, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let backend = Scripted { replies, calls: Arc::clone(&calls) };
        (LlmGateway::with_backend(LlmConfig::mock(), Box::new(backend)), calls)
    }

    #[test]
    fn judgment_retries_then_succeeds() {
        let (g, calls) = scripted(vec!["they differ somewhat", "Different."]);
        let j = g.judge_entity_context("effusion", "effusion", "no effusion").unwrap();
        assert_eq!(j.value, Judgment::Different);
        assert_eq!(j.raw_reply, "Different.");
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn judgment_gives_up_after_retries() {
        let (g, calls) = scripted(vec!["they differ somewhat"]);
        let err = g.judge_entity_context("effusion", "effusion", "effusion").unwrap_err();
        assert!(matches!(err, LlmError::Unparseable { attempts: 4, .. }), "{err}");
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn judgment_requires_entity_in_both_reports() {
        let g = LlmGateway::mock();
        assert!(matches!(
            g.judge_entity_context("effusion", "effusion", "clear lungs"),
            Err(LlmError::Precondition(_))
        ));
    }

    #[test]
    fn direct_score_parsing_and_range() {
        let (g, _) = scripted(vec!["Score: 9.7, Reasoning: near identical"]);
        assert_eq!(
            g.direct_similarity("a", "b").unwrap(),
            DirectScore { score: 9.7, reasoning: "near identical".into() }
        );
        let (g, _) = scripted(vec!["Score: 11, Reasoning: x"]);
        assert_eq!(g.direct_similarity("a", "b").unwrap_err().to_string(), "score out of range: 11");
        let (g, _) = scripted(vec!["no marker here"]);
        assert!(matches!(g.direct_similarity("a", "b"), Err(LlmError::Unparseable { .. })));
    }

    #[test]
    fn explain_guards_empty_input() {
        let g = LlmGateway::mock();
        assert!(matches!(g.explain_score(0.63, "Effusion.", " "), Err(LlmError::Precondition(_))));
    }

    #[test]
    fn config_validation() {
        assert!(LlmConfig { temperature: -1.0, ..LlmConfig::mock() }.validate().is_err());
        assert!(LlmConfig { backend: BackendKind::Http, ..LlmConfig::mock() }.validate().is_err());
        assert!(LlmConfig::http("http://localhost:1").validate().is_ok());
        assert_eq!(LlmConfig::default().temperature, 0.0);
        assert_eq!(LlmConfig::default().max_retries, 3);
    }

    #[test]
    fn in_flight_limit_is_respected() {
        struct Slow {
            now: AtomicUsize,
            peak: Arc<AtomicUsize>,
        }
        impl Completion for Slow {
            fn complete(&self, _: &Request<'_>) -> Result<String, LlmError> {
                let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(n, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(20));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok("same".into())
            }
        }
        let peak = Arc::new(AtomicUsize::new(0));
        let backend = Box::new(Slow { now: AtomicUsize::new(0), peak: Arc::clone(&peak) });
        let g = LlmGateway::with_backend(LlmConfig { max_in_flight: 2, ..LlmConfig::mock() }, backend);
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| g.chat("x").unwrap());
            }
        });
        let peak = peak.load(Ordering::SeqCst);
        assert!(peak <= 2, "peak {peak}");
    }
}
