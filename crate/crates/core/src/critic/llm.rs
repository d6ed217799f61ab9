//! Chat-completion client, verdict cache, and the LLM-backed critic.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{build_prompt, parse_verdict, Critic, CriticError, CriticVerdict, PromptContext};
use crate::exprtree::{render, ExpressionTree, VariableSchema};

pub const DEFAULT_MAX_TOKENS: u32 = 256;
const CHAT_PATH: &str = "/v1/chat/completions";

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_in_flight() -> usize {
    4
}

/// Where and how to reach a chat-completion server. Sampling temperature is
/// always 0 and is not configurable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpoint {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Environment variable holding a bearer token, if the server needs one.
    #[serde(default)]
    pub auth_env: Option<String>,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

impl LlmEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            auth_env: None,
            backoff_ms: default_backoff(),
            max_in_flight: default_in_flight(),
        }
    }

    pub const fn temperature(&self) -> f64 {
        0.0
    }

    pub fn chat_url(&self) -> String {
        format!("{}{CHAT_PATH}", self.base_url.trim_end_matches('/'))
    }

    pub fn validate(&self) -> Result<(), CriticError> {
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(CriticError::Config(format!(
                "endpoint URL must start with http:// or https://, got `{}`",
                self.base_url
            )));
        }
        if self.model_name.is_empty() {
            return Err(CriticError::Config("model name is empty".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(CriticError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(endpoint: &LlmEndpoint, prompt: &str) -> Self {
        Self {
            model: endpoint.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature: endpoint.temperature(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// One cached verdict, as stored on each line of the cache file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub dim_corr: f64,
    pub simp: f64,
    pub sim: f64,
    pub feedback: String,
    pub model: String,
    pub timestamp: u64,
}

pub fn cache_key(canonical_key: &str, variant: super::PromptVariant, model: &str) -> String {
    format!("{canonical_key} | {variant} | {model}")
}

/// Verdicts keyed by [`cache_key`], optionally persisted as JSON lines.
#[derive(Debug, Default)]
pub struct VerdictCache {
    entries: Mutex<HashMap<String, CriticVerdict>>,
    file: Option<(PathBuf, Mutex<File>)>,
}

impl VerdictCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists and appends new verdicts to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CriticError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| CriticError::Config(format!("cache {}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| {
                    CriticError::Config(format!("cache {} line {}: {e}", path.display(), i + 1))
                })?;
                entries.insert(
                    rec.key,
                    CriticVerdict::new(rec.dim_corr, rec.simp, rec.sim, rec.feedback),
                );
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(Self {
            entries: Mutex::new(entries),
            file: Some((path.to_path_buf(), Mutex::new(file))),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn get(&self, key: &str) -> Option<CriticVerdict> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `verdict` unless `key` is already present; the first verdict
    /// for a key wins.
    pub fn insert(
        &self,
        key: &str,
        model: &str,
        verdict: &CriticVerdict,
    ) -> Result<(), CriticError> {
        let mut entries = self.entries.lock().expect("cache lock");
        if entries.contains_key(key) {
            return Ok(());
        }
        if let Some((path, file)) = &self.file {
            let rec = CacheRecord {
                key: key.to_string(),
                dim_corr: verdict.dim_corr,
                simp: verdict.simp,
                sim: verdict.sim,
                feedback: verdict.feedback.clone(),
                model: model.to_string(),
                timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            };
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(file.lock().expect("cache file lock"), "{line}")
                .map_err(|e| CriticError::Config(format!("cache {}: {e}", path.display())))?;
        }
        entries.insert(key.to_string(), verdict.clone());
        Ok(())
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    used: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut used = self.used.lock().expect("gate lock");
        while *used >= self.limit {
            used = self.freed.wait(used).expect("gate lock");
        }
        *used += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Retryable(String),
    Fatal(CriticError),
}

/// Critic backed by a chat-completion server.
pub struct LlmCritic {
    endpoint: LlmEndpoint,
    ctx: PromptContext,
    schema: VariableSchema,
    cache: Arc<VerdictCache>,
    agent: ureq::Agent,
    gate: Gate,
    requests: AtomicUsize,
}

impl LlmCritic {
    pub fn new(
        endpoint: LlmEndpoint,
        ctx: PromptContext,
        schema: VariableSchema,
        cache: Arc<VerdictCache>,
    ) -> Result<Self, CriticError> {
        endpoint.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let limit = endpoint.max_in_flight.max(1);
        Ok(Self {
            endpoint,
            ctx,
            schema,
            cache,
            agent,
            gate: Gate {
                used: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
            requests: AtomicUsize::new(0),
        })
    }

    pub fn endpoint(&self) -> &LlmEndpoint {
        &self.endpoint
    }

    /// HTTP requests attempted so far, including failed ones.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    /// The prompt that would be sent for `equation`.
    pub fn prompt_for(&self, equation: &ExpressionTree) -> Result<String, CriticError> {
        Ok(build_prompt(&render(equation, &self.schema)?, &self.ctx))
    }

    fn send(&self, prompt: &str) -> Result<String, Failure> {
        let body = serde_json::to_string(&ChatRequest::new(&self.endpoint, prompt))
            .expect("request serializes");
        let mut req = self
            .agent
            .post(self.endpoint.chat_url())
            .header("Content-Type", "application/json");
        if let Some(var) = &self.endpoint.auth_env {
            let token = std::env::var(var).map_err(|_| {
                Failure::Fatal(CriticError::Config(format!(
                    "auth variable {var} is not set"
                )))
            })?;
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let _slot = self.gate.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut resp = req
            .send(body)
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Err(Failure::Retryable(format!("HTTP {status}: {snippet}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Failure::Retryable(format!("malformed response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Failure::Retryable("response has no choices".into()))
    }
}

impl Critic for LlmCritic {
    fn label(&self) -> String {
        self.endpoint.model_name.clone()
    }

    /// Cache hit first; otherwise one request per attempt, with up to
    /// `max_retries` further attempts after a transport or parse failure.
    fn score(&self, equation: &ExpressionTree) -> Result<CriticVerdict, CriticError> {
        let key = cache_key(
            &equation.canonical_key(),
            self.ctx.variant,
            &self.endpoint.model_name,
        );
        if let Some(v) = self.cache.get(&key) {
            return Ok(v);
        }
        let prompt = self.prompt_for(equation)?;
        let attempts = self.endpoint.max_retries + 1;
        let mut last = CriticError::Transport {
            attempts: 0,
            message: "no attempt made".into(),
        };
        for attempt in 0..attempts {
            if attempt > 0 {
                let factor = 1u64 << (attempt - 1).min(16);
                std::thread::sleep(Duration::from_millis(
                    self.endpoint.backoff_ms.saturating_mul(factor),
                ));
            }
            match self.send(&prompt) {
                Ok(text) => match parse_verdict(&text) {
                    Ok(v) => {
                        self.cache.insert(&key, &self.endpoint.model_name, &v)?;
                        return Ok(v);
                    }
                    Err(e) => last = e,
                },
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) => {
                    last = CriticError::Transport {
                        attempts: attempt + 1,
                        message,
                    }
                }
            }
        }
        Err(last)
    }
}
