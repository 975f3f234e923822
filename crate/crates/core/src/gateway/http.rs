use serde::Serialize;
use serde_json::Value;

use super::{CallError, FailureKind, ModelConfig};
use crate::prompt::Prompt;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatMessage {
    pub role: &'static str,
    pub content: String,
}

/// Body of a chat-completions request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<i64>,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(prompt: &Prompt, config: &ModelConfig) -> ChatRequest {
        ChatRequest {
            model: config.model_id.clone(),
            messages: vec![ChatMessage {
                role: "user",
                content: prompt.text.clone(),
            }],
            temperature: config.temperature,
            top_p: config.top_p,
            top_k: (config.top_k >= 0).then_some(config.top_k),
            max_tokens: config.max_tokens,
        }
    }
}

pub trait ChatTransport: Send + Sync {
    /// Returns the assistant message text.
    fn complete(&self, request: &ChatRequest, config: &ModelConfig) -> Result<String, CallError>;
}

/// Blocking HTTP transport for OpenAI-compatible `/chat/completions`.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport
    }
}

fn classify_status(status: u16, body: &str) -> CallError {
    let snippet: String = body.chars().take(200).collect();
    let message = format!("HTTP {status}: {snippet}");
    match status {
        401 | 403 => CallError {
            kind: FailureKind::Auth,
            message,
            retryable: false,
        },
        408 | 429 | 500..=599 => CallError {
            kind: FailureKind::Transport,
            message,
            retryable: true,
        },
        _ => CallError {
            kind: FailureKind::Provider,
            message,
            retryable: false,
        },
    }
}

/// Pulls `choices[0].message.content` out of a completion body.
pub(crate) fn message_content(body: &Value) -> Result<String, CallError> {
    if let Some(err) = body.get("error") {
        return Err(CallError {
            kind: FailureKind::Provider,
            message: err.to_string(),
            retryable: false,
        });
    }
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| CallError {
            kind: FailureKind::Provider,
            message: "response has no choices[0].message.content".into(),
            retryable: false,
        })
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest, config: &ModelConfig) -> Result<String, CallError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/chat/completions", config.endpoint.trim_end_matches('/'));
        let mut req = agent.post(&url);
        if let Some(var) = &config.api_key_env {
            let key = std::env::var(var).map_err(|_| CallError {
                kind: FailureKind::Auth,
                message: format!("environment variable {var} is not set"),
                retryable: false,
            })?;
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req
            .send_json(request)
            .map_err(|e| CallError::transient(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| CallError::transient(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &body));
        }
        let json: Value = serde_json::from_str(&body).map_err(|e| CallError {
            kind: FailureKind::Provider,
            message: format!("malformed JSON: {e}"),
            retryable: false,
        })?;
        message_content(&json)
    }
}
