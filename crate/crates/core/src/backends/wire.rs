//! Wire client for logprob-capable chat-completion endpoints.
//!
//! Speaks the widely implemented `/v1/chat/completions` shape, requesting
//! per-token logprobs (and top-k alternatives for judge calls). Transient
//! failures are retried at most twice with exponential backoff starting at
//! 250 ms so tail latency stays bounded.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    check_generate_preconditions, check_judge_preconditions, BackendError, BackendResponse,
    DecodingParams, FinishReason, GenerationMode, ModelBackend, NextTokenDistribution, Role,
};
use crate::Timed;

const RETRY_BACKOFF_MS: [u64; 2] = [250, 500];

/// Configuration for one endpoint/model pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireConfig {
    /// Endpoint base, e.g. `http://127.0.0.1:8000`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    pub timeout_ms: u64,
    /// System directive used in `WithReasoning` mode.
    pub reasoning_directive: String,
    /// System directive used in `ActionOnly` mode.
    pub action_only_directive: String,
}

impl Default for WireConfig {
    fn default() -> Self {
        WireConfig {
            base_url: "http://127.0.0.1:8000".to_string(),
            model: "default".to_string(),
            auth_env: None,
            timeout_ms: 120_000,
            reasoning_directive: "Think step by step about the next move, then end your reply \
                                  with exactly one action line in the canonical action grammar."
                .to_string(),
            action_only_directive: "Reply with exactly one action line in the canonical action \
                                    grammar. Do not include any reasoning or explanation."
                .to_string(),
        }
    }
}

/// HTTP [`ModelBackend`] for a single endpoint/model.
///
/// Multi-model deployments compose several of these behind a [`RoleRouter`].
pub struct WireBackend {
    config: WireConfig,
    client: reqwest::Client,
}

impl WireBackend {
    pub fn new(config: WireConfig) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Wire(e.to_string()))?;
        Ok(WireBackend { config, client })
    }

    fn completions_url(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    async fn post(&self, body: serde_json::Value) -> Result<String, BackendError> {
        let mut last_err = BackendError::Wire("no attempt made".to_string());
        for attempt in 0..=RETRY_BACKOFF_MS.len() {
            if attempt > 0 {
                tokio::time::sleep(Duration::from_millis(RETRY_BACKOFF_MS[attempt - 1])).await;
            }
            match self.post_once(&body).await {
                Ok(text) => return Ok(text),
                // Malformed bodies are not transient; surface immediately.
                Err(e @ BackendError::Malformed(_)) => return Err(e),
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }

    async fn post_once(&self, body: &serde_json::Value) -> Result<String, BackendError> {
        let mut request = self.client.post(self.completions_url()).json(body);
        if let Some(var) = &self.config.auth_env {
            if let Ok(token) = std::env::var(var) {
                request = request.bearer_auth(token);
            }
        }
        let response = request.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(self.config.timeout_ms)
            } else {
                BackendError::Wire(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .await
            .map_err(|e| BackendError::Wire(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Wire(format!("status {status}: {text}")));
        }
        Ok(text)
    }
}

#[async_trait::async_trait]
impl ModelBackend for WireBackend {
    async fn generate(
        &self,
        _role: Role,
        context: &str,
        mode: GenerationMode,
        params: &DecodingParams,
    ) -> Result<BackendResponse, BackendError> {
        check_generate_preconditions(context, params)?;
        let directive = match mode {
            GenerationMode::WithReasoning => &self.config.reasoning_directive,
            GenerationMode::ActionOnly => &self.config.action_only_directive,
        };
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": directive},
                {"role": "user", "content": context},
            ],
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "logprobs": true,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        let started = Instant::now();
        let text = self.post(body).await?;
        let latency_ms = started.elapsed().as_millis() as u64;
        parse_generate_response(&text, latency_ms)
    }

    async fn judge_next_token(
        &self,
        _role: Role,
        prompt: &str,
        k: usize,
    ) -> Result<Timed<NextTokenDistribution>, BackendError> {
        check_judge_preconditions(k)?;
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": 1,
            "temperature": 0.0,
            "logprobs": true,
            "top_logprobs": k,
        });
        let started = Instant::now();
        let text = self.post(body).await?;
        let latency_ms = started.elapsed().as_millis() as u64;
        Ok(Timed::new(parse_judge_response(&text, k)?, latency_ms))
    }
}

/// Routes roles to independent backends so SLM, LLM, and critic can live on
/// different endpoints (the critic is usually the LLM instance).
pub struct RoleRouter {
    pub slm: std::sync::Arc<dyn ModelBackend>,
    pub llm: std::sync::Arc<dyn ModelBackend>,
    pub critic: std::sync::Arc<dyn ModelBackend>,
}

impl RoleRouter {
    fn backend(&self, role: Role) -> &dyn ModelBackend {
        match role {
            Role::Slm => self.slm.as_ref(),
            Role::Llm => self.llm.as_ref(),
            Role::Critic => self.critic.as_ref(),
        }
    }
}

#[async_trait::async_trait]
impl ModelBackend for RoleRouter {
    async fn generate(
        &self,
        role: Role,
        context: &str,
        mode: GenerationMode,
        params: &DecodingParams,
    ) -> Result<BackendResponse, BackendError> {
        self.backend(role)
            .generate(role, context, mode, params)
            .await
    }

    async fn judge_next_token(
        &self,
        role: Role,
        prompt: &str,
        k: usize,
    ) -> Result<Timed<NextTokenDistribution>, BackendError> {
        self.backend(role).judge_next_token(role, prompt, k).await
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Option<Vec<TopLogprob>>,
}

#[derive(Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

fn parse_body(body: &str) -> Result<Choice, BackendError> {
    let parsed: ChatResponse = serde_json::from_str(body)
        .map_err(|e| BackendError::Malformed(format!("chat completion decode: {e}")))?;
    parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Malformed("no choices in response".to_string()))
}

fn parse_generate_response(body: &str, latency_ms: u64) -> Result<BackendResponse, BackendError> {
    let choice = parse_body(body)?;
    let text = choice
        .message
        .content
        .ok_or_else(|| BackendError::Malformed("missing message content".to_string()))?;
    let mut tokens = Vec::new();
    let mut token_logprobs = Vec::new();
    if let Some(lp) = choice.logprobs.and_then(|l| l.content) {
        for entry in lp {
            tokens.push(entry.token);
            token_logprobs.push(entry.logprob);
        }
    }
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    let response = BackendResponse {
        text,
        tokens,
        token_logprobs,
        finish_reason,
        latency_ms,
    };
    response.validate()?;
    Ok(response)
}

fn parse_judge_response(body: &str, k: usize) -> Result<NextTokenDistribution, BackendError> {
    let choice = parse_body(body)?;
    let first = choice
        .logprobs
        .and_then(|l| l.content)
        .and_then(|c| c.into_iter().next())
        .ok_or_else(|| BackendError::Malformed("missing token logprobs".to_string()))?;
    let top = first
        .top_logprobs
        .ok_or_else(|| BackendError::Malformed("missing top_logprobs".to_string()))?;
    if top.len() < k {
        return Err(BackendError::InsufficientTopK {
            got: top.len(),
            want: k,
        });
    }
    let mut entries: Vec<(String, f64)> = top.into_iter().map(|t| (t.token, t.logprob)).collect();
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    entries.truncate(k);
    NextTokenDistribution::new(entries)
}
