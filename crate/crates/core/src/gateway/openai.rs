//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendFailure, ChatBackend, ChatRequest, GatewayError, MediaRef, ModelRole};

pub const API_KEY_ENV: &str = "TOC_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
}

pub struct OpenAiBackend {
    client: Client,
    api_key: String,
    mllm: Option<EndpointConfig>,
    llm: Option<EndpointConfig>,
    media_url_template: String,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

impl OpenAiBackend {
    /// Fails with [`GatewayError::Auth`] when `api_key` is missing or empty,
    /// before any connection is made.
    pub fn new(
        api_key: Option<String>,
        mllm: Option<EndpointConfig>,
        llm: Option<EndpointConfig>,
        media_url_template: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let api_key = api_key
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| GatewayError::Auth(format!("{API_KEY_ENV} is not set")))?;
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::InvalidRequest(format!("http client: {e}")))?;
        Ok(Self {
            client,
            api_key,
            mllm,
            llm,
            media_url_template: media_url_template.into(),
        })
    }

    pub fn from_env(
        mllm: Option<EndpointConfig>,
        llm: Option<EndpointConfig>,
        media_url_template: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        Self::new(
            std::env::var(API_KEY_ENV).ok(),
            mllm,
            llm,
            media_url_template,
            timeout,
        )
    }

    fn media_url(&self, media: &MediaRef) -> String {
        let base = self
            .media_url_template
            .replace("{video_id}", &media.video_id);
        match media.span_s {
            Some((start, end)) => format!("{base}#t={start:.3},{end:.3}"),
            None => base,
        }
    }

    /// Request body in the chat-completions wire format. Messages with media
    /// become content-part arrays: one `video_url` part per reference, then
    /// the text.
    pub fn body(&self, request: &ChatRequest, model: &str) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                if m.media.is_empty() {
                    json!({ "role": m.role, "content": m.text })
                } else {
                    let mut parts: Vec<Value> = m
                        .media
                        .iter()
                        .map(|media| {
                            json!({ "type": "video_url", "video_url": { "url": self.media_url(media) } })
                        })
                        .collect();
                    parts.push(json!({ "type": "text", "text": m.text }));
                    json!({ "role": m.role, "content": parts })
                }
            })
            .collect();
        let mut body = json!({
            "model": model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

fn classify(status: StatusCode, body: String) -> BackendFailure {
    let reason = format!(
        "HTTP {status}: {}",
        body.chars().take(200).collect::<String>()
    );
    match status {
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => BackendFailure::Auth(reason),
        StatusCode::TOO_MANY_REQUESTS | StatusCode::REQUEST_TIMEOUT => BackendFailure::Transient {
            reason,
            timeout: status == StatusCode::REQUEST_TIMEOUT,
        },
        s if s.is_server_error() => BackendFailure::Transient {
            reason,
            timeout: false,
        },
        _ => BackendFailure::Permanent(reason),
    }
}

impl ChatBackend for OpenAiBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendFailure> {
        let endpoint = match request.model_role {
            ModelRole::Mllm => self.mllm.as_ref(),
            ModelRole::Llm => self.llm.as_ref(),
        }
        .ok_or_else(|| {
            BackendFailure::Permanent(format!("no endpoint configured for {}", request.model_role))
        })?;
        let response = self
            .client
            .post(&endpoint.endpoint)
            .bearer_auth(&self.api_key)
            .json(&self.body(request, &endpoint.model))
            .send()
            .map_err(|e| BackendFailure::Transient {
                reason: e.to_string(),
                timeout: e.is_timeout(),
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(classify(status, response.text().unwrap_or_default()));
        }
        let parsed: CompletionResponse =
            response.json().map_err(|e| BackendFailure::Transient {
                reason: format!("malformed response: {e}"),
                timeout: e.is_timeout(),
            })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendFailure::Permanent("response has no message content".into()))
    }
}
