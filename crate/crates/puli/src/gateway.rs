//! Client for remote chat-completion endpoints, used by the LLM forge, the
//! LLM summarizer, remote learner backends, conclusion regeneration, and the
//! LLM-as-judge protocol.
//!
//! The wire shape is the de-facto chat-completion JSON. Transient failures
//! are retried with exponential backoff; auth failures are not. Concurrent
//! callers share an in-flight cap. Credentials come from an environment
//! variable and never appear in logs, transcripts, or debug output.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{ContentExample, LearnerError, ObserverBackend, PresenterBackend};

pub const DEFAULT_API_KEY_ENV: &str = "PULI_API_KEY";
pub const DEFAULT_MAX_ATTEMPTS: usize = 3;
pub const DEFAULT_IN_FLIGHT_CAP: usize = 4;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("missing credential: set ${0}")]
    MissingCredential(String),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("{attempts} attempts exhausted; last error: {last}")]
    RetriesExhausted { attempts: usize, last: String },
    #[error("judge requires at least 2 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("no embeddings endpoint configured")]
    NoEmbeddingsEndpoint,
}

/// Transport-level failure classification, which drives the retry policy.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("auth: {0}")]
    Auth(String),
    #[error("transient: {0}")]
    Transient(String),
    #[error("malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: usize,
}

impl ChatRequest {
    fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "at least one message required".to_string(),
            ));
        }
        if self.messages[0].role == Role::Assistant {
            return Err(GatewayError::InvalidRequest(
                "first message must be system or user".to_string(),
            ));
        }
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} must be a finite non-negative number",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Low-level request sender. Implementations classify failures so the
/// gateway can decide what to retry.
pub trait ChatTransport: Send + Sync {
    fn send_chat(&self, request: &ChatRequest) -> Result<String, TransportError>;

    fn send_embeddings(&self, _model: &str, _input: &str) -> Result<Vec<f64>, TransportError> {
        Err(TransportError::Malformed(
            "transport has no embeddings support".to_string(),
        ))
    }
}

/// Closure-backed transport, handy for offline runs and tests.
pub struct FnTransport<F>(pub F);

impl<F> ChatTransport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<String, TransportError> + Send + Sync,
{
    fn send_chat(&self, request: &ChatRequest) -> Result<String, TransportError> {
        (self.0)(request)
    }
}

/// Model names used per call site.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelNames {
    pub summarizer: String,
    pub forge: String,
    pub judge: String,
    pub presenter: String,
    pub embeddings: String,
}

impl Default for ModelNames {
    fn default() -> Self {
        ModelNames {
            summarizer: "default-summarizer".to_string(),
            forge: "default-forge".to_string(),
            judge: "default-judge".to_string(),
            presenter: "default-presenter".to_string(),
            embeddings: "default-embeddings".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayConfig {
    /// Chat-completions endpoint URL.
    pub endpoint: String,
    /// Embeddings endpoint URL, if the deployment provides one.
    pub embeddings_endpoint: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub models: ModelNames,
    pub temperature: f64,
    pub max_tokens: usize,
    /// Total attempts per request, including the first.
    pub max_attempts: usize,
    /// Base backoff delay; attempt n sleeps base × 2ⁿ.
    pub backoff_base_ms: u64,
    /// Maximum concurrent in-flight requests.
    pub in_flight_cap: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".to_string(),
            embeddings_endpoint: None,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            models: ModelNames::default(),
            temperature: 0.7,
            max_tokens: 1024,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            backoff_base_ms: 250,
            in_flight_cap: DEFAULT_IN_FLIGHT_CAP,
        }
    }
}

/// Counting semaphore for the per-endpoint in-flight cap.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

/// Judge outcome for one comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JudgeOutcome {
    /// Winning method name (the caller's key, not the presented letter).
    Winner(String),
    /// Verdict could not be parsed into a single offered letter; excluded
    /// from win-rate tallies.
    Abstain { raw: String },
}

/// Shared client over a transport; safe for concurrent use.
pub struct Gateway {
    transport: Arc<dyn ChatTransport>,
    config: GatewayConfig,
    semaphore: Semaphore,
}

// the transport may hold the key: debug output is structural only
impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("endpoint", &self.config.endpoint)
            .field("max_attempts", &self.config.max_attempts)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(transport: Arc<dyn ChatTransport>, config: GatewayConfig) -> Self {
        let semaphore = Semaphore::new(config.in_flight_cap);
        Gateway {
            transport,
            config,
            semaphore,
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Sends a chat request, retrying transient failures with exponential
    /// backoff up to the configured attempt budget.
    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let _permit = self.semaphore.acquire();
        let mut last = String::new();
        for attempt in 0..self.config.max_attempts {
            match self.transport.send_chat(request) {
                Ok(text) => return Ok(text),
                Err(TransportError::Auth(message)) => {
                    return Err(GatewayError::AuthFailed(message))
                }
                Err(TransportError::Malformed(message)) => {
                    return Err(GatewayError::MalformedResponse(message))
                }
                Err(TransportError::Transient(message)) => {
                    last = message;
                    if attempt + 1 < self.config.max_attempts {
                        let delay = self.config.backoff_base_ms << attempt;
                        eprintln!(
                            "gateway: transient failure (attempt {}/{}), retrying in {delay} ms: {last}",
                            attempt + 1,
                            self.config.max_attempts,
                        );
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        Err(GatewayError::RetriesExhausted {
            attempts: self.config.max_attempts,
            last,
        })
    }

    /// Fetches an embedding vector from the embeddings endpoint.
    pub fn embed(&self, model: &str, input: &str) -> Result<Vec<f64>, GatewayError> {
        let _permit = self.semaphore.acquire();
        let mut last = String::new();
        for attempt in 0..self.config.max_attempts {
            match self.transport.send_embeddings(model, input) {
                Ok(vector) => return Ok(vector),
                Err(TransportError::Auth(message)) => {
                    return Err(GatewayError::AuthFailed(message))
                }
                Err(TransportError::Malformed(message)) => {
                    return Err(GatewayError::MalformedResponse(message))
                }
                Err(TransportError::Transient(message)) => {
                    last = message;
                    if attempt + 1 < self.config.max_attempts {
                        std::thread::sleep(Duration::from_millis(
                            self.config.backoff_base_ms << attempt,
                        ));
                    }
                }
            }
        }
        Err(GatewayError::RetriesExhausted {
            attempts: self.config.max_attempts,
            last,
        })
    }

    /// Presents golden + labeled candidate conclusions to the judge model and
    /// parses its single-letter verdict back into the winning method name.
    ///
    /// Candidate presentation order is a seeded shuffle, so tallies cannot
    /// depend on the caller's map order.
    pub fn judge(
        &self,
        golden: &str,
        candidates: &BTreeMap<String, String>,
        seed: u64,
    ) -> Result<JudgeOutcome, GatewayError> {
        if candidates.len() < 2 {
            return Err(GatewayError::TooFewCandidates(candidates.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<&String> = candidates.keys().collect();
        order.shuffle(&mut rng);

        let mut letter_to_method: BTreeMap<char, &str> = BTreeMap::new();
        let mut body = String::new();
        body.push_str("Golden Standard Conclusion:\n");
        body.push_str(golden);
        body.push_str("\n\nCandidate Conclusions to Evaluate:\n");
        for (i, method) in order.iter().enumerate() {
            let letter = (b'A' + i as u8) as char;
            letter_to_method.insert(letter, method.as_str());
            body.push_str(&format!("\nMethod {letter}:\n{}\n", candidates[*method]));
        }

        let request = ChatRequest {
            model: self.config.models.judge.clone(),
            messages: vec![
                ChatMessage::system(JUDGE_SYSTEM_PROMPT),
                ChatMessage::user(body),
            ],
            temperature: 0.0,
            max_tokens: 8,
        };
        let raw = self.complete(&request)?;
        let verdict = raw.trim();
        let mut chars = verdict.chars();
        match (chars.next(), chars.next()) {
            (Some(letter), None) => {
                let letter = letter.to_ascii_uppercase();
                match letter_to_method.get(&letter) {
                    Some(method) => Ok(JudgeOutcome::Winner((*method).to_string())),
                    None => Ok(JudgeOutcome::Abstain {
                        raw: verdict.to_string(),
                    }),
                }
            }
            _ => Ok(JudgeOutcome::Abstain {
                raw: verdict.to_string(),
            }),
        }
    }
}

const JUDGE_SYSTEM_PROMPT: &str = "You are an expert scientific evaluator specializing in research conclusion assessment. You will be given a golden standard conclusion of a scientific research project, followed by multiple candidate conclusions generated by different methods. The golden standard summarizes the key elements of the project, including its main experimental design, core findings, and overall scientific significance.\n\nEvaluate the candidates on: scientific accuracy and consistency; completeness; clarity and structure; research relevance; evidence integration; and alignment with the golden standard.\n\nCRITICAL INSTRUCTIONS:\n- Output ONLY ONE LETTER corresponding to the best method (A, B, C, D, or E).\n- Consider the golden standard as a quality reference, but pick the objectively best candidate.\n- If candidates are very similar in quality, choose based on clarity and completeness.\n- Do NOT explain your reasoning.\n\nExample Output: B";

/// HTTP transport speaking the chat-completion JSON protocol over reqwest.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    embeddings_endpoint: Option<String>,
    api_key: String,
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport")
            .field("endpoint", &self.endpoint)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingsRow>,
}

#[derive(Deserialize)]
struct EmbeddingsRow {
    embedding: Vec<f64>,
}

impl HttpTransport {
    /// Builds a transport from config, reading the API key from the
    /// configured environment variable. A missing credential fails
    /// immediately rather than at first request.
    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| GatewayError::MissingCredential(config.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        Ok(HttpTransport {
            client,
            endpoint: config.endpoint.clone(),
            embeddings_endpoint: config.embeddings_endpoint.clone(),
            api_key,
        })
    }

    fn classify_status(status: reqwest::StatusCode, body: &str) -> TransportError {
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            TransportError::Auth(format!("HTTP {status}"))
        } else if status.is_server_error()
            || status == reqwest::StatusCode::TOO_MANY_REQUESTS
            || status == reqwest::StatusCode::REQUEST_TIMEOUT
        {
            TransportError::Transient(format!("HTTP {status}"))
        } else {
            TransportError::Malformed(format!("HTTP {status}: {body}"))
        }
    }
}

impl ChatTransport for HttpTransport {
    fn send_chat(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(request)
            .send()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        if !status.is_success() {
            return Err(Self::classify_status(status, &body));
        }
        let parsed: ChatCompletionResponse = serde_json::from_str(&body)
            .map_err(|e| TransportError::Malformed(format!("bad completion JSON: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportError::Malformed("no choices in response".to_string()))
    }

    fn send_embeddings(&self, model: &str, input: &str) -> Result<Vec<f64>, TransportError> {
        let endpoint = self
            .embeddings_endpoint
            .as_ref()
            .ok_or_else(|| TransportError::Malformed("no embeddings endpoint".to_string()))?;
        let response = self
            .client
            .post(endpoint)
            .bearer_auth(&self.api_key)
            .json(&serde_json::json!({ "model": model, "input": input }))
            .send()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        if !status.is_success() {
            return Err(Self::classify_status(status, &body));
        }
        let parsed: EmbeddingsResponse = serde_json::from_str(&body)
            .map_err(|e| TransportError::Malformed(format!("bad embeddings JSON: {e}")))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| TransportError::Malformed("no embedding in response".to_string()))
    }
}

/// Remote Observer: timing decisions as chat calls, embeddings via the
/// embeddings endpoint. Fine-tuning is out of reach over a chat API, so fit
/// is a warned no-op.
pub struct RemoteObserver {
    gateway: Arc<Gateway>,
    dim: usize,
}

impl RemoteObserver {
    pub fn new(gateway: Arc<Gateway>, dim: usize) -> Self {
        RemoteObserver { gateway, dim }
    }
}

const REMOTE_OBSERVER_SYSTEM: &str = "You monitor a multi-round scientific team discussion. Given the project proposal, the accumulated discussion summary, and the most recent turns, estimate the probability that an assistant should intervene right now (because of a scientific error, low collaboration, scope drift, or a missed opportunity). Respond with a single number between 0 and 1 and nothing else.";

fn first_float(text: &str) -> Option<f64> {
    text.split(|c: char| c.is_whitespace() || c == ':' || c == '=')
        .filter_map(|token| token.trim_matches(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-')).parse::<f64>().ok())
        .next()
}

impl ObserverBackend for RemoteObserver {
    fn dim(&self) -> usize {
        self.dim
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn embed(&self, memory_text: &str) -> Result<Vec<f64>, LearnerError> {
        let model = self.gateway.config().models.embeddings.clone();
        let mut vector = self
            .gateway
            .embed(&model, memory_text)
            .map_err(|e| LearnerError::Remote(e.to_string()))?;
        vector.resize(self.dim, 0.0);
        Ok(vector)
    }

    fn predict(&self, memory_text: &str) -> Result<f64, LearnerError> {
        let request = ChatRequest {
            model: self.gateway.config().models.presenter.clone(),
            messages: vec![
                ChatMessage::system(REMOTE_OBSERVER_SYSTEM),
                ChatMessage::user(memory_text.to_string()),
            ],
            temperature: 0.0,
            max_tokens: 8,
        };
        let raw = self
            .gateway
            .complete(&request)
            .map_err(|e| LearnerError::Remote(e.to_string()))?;
        first_float(&raw)
            .map(|p| p.clamp(0.0, 1.0))
            .ok_or_else(|| LearnerError::Remote(format!("unparseable probability {raw:?}")))
    }

    fn fit(&mut self, _positives: &[&str], _negatives: &[&str]) -> Result<(), LearnerError> {
        eprintln!("gateway: remote observer fit is a no-op (remote fine-tuning not supported)");
        Ok(())
    }
}

/// Remote Presenter: generation as chat calls; fit is a warned no-op.
pub struct RemotePresenter {
    gateway: Arc<Gateway>,
    dim: usize,
}

impl RemotePresenter {
    pub fn new(gateway: Arc<Gateway>, dim: usize) -> Self {
        RemotePresenter { gateway, dim }
    }
}

const REMOTE_PRESENTER_SYSTEM: &str = "You assist a multi-round scientific team discussion. Given the project proposal, the accumulated discussion summary, and the most recent turns, produce one short, constructive intervention that redirects the team toward the project goal. Ground the suggestion in the actual dialogue.";

impl PresenterBackend for RemotePresenter {
    fn dim(&self) -> usize {
        self.dim
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn embed(&self, memory_text: &str) -> Result<Vec<f64>, LearnerError> {
        let model = self.gateway.config().models.embeddings.clone();
        let mut vector = self
            .gateway
            .embed(&model, memory_text)
            .map_err(|e| LearnerError::Remote(e.to_string()))?;
        vector.resize(self.dim, 0.0);
        Ok(vector)
    }

    fn generate(&self, memory_text: &str) -> Result<String, LearnerError> {
        let request = ChatRequest {
            model: self.gateway.config().models.presenter.clone(),
            messages: vec![
                ChatMessage::system(REMOTE_PRESENTER_SYSTEM),
                ChatMessage::user(memory_text.to_string()),
            ],
            temperature: self.gateway.config().temperature,
            max_tokens: self.gateway.config().max_tokens,
        };
        self.gateway
            .complete(&request)
            .map_err(|e| LearnerError::Remote(e.to_string()))
    }

    fn fit(&mut self, _positives: &[ContentExample]) -> Result<(), LearnerError> {
        eprintln!("gateway: remote presenter fit is a no-op (remote fine-tuning not supported)");
        Ok(())
    }
}
