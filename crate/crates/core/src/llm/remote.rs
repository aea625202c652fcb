//! OpenAI-compatible chat-completions backend. The rendered prompt is sent
//! as a single user message; temperature and seed come from the request.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::net::{with_retries, RetryPolicy};

use super::{ChatBackend, LlmError, LlmRequest, LlmResponse};

/// Name of the environment variable holding the API key.
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

pub struct RemoteChatBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
}

impl RemoteChatBackend {
    pub fn new(base_url: &str, api_key: &str) -> RemoteChatBackend {
        RemoteChatBackend {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("client builds"),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            retry: RetryPolicy::default(),
        }
    }

    /// Read the API key from the environment.
    pub fn from_env(base_url: &str) -> Result<RemoteChatBackend, LlmError> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| LlmError::BadResponse {
            message: format!("{API_KEY_ENV} is not set"),
        })?;
        Ok(RemoteChatBackend::new(base_url, &api_key))
    }

    pub fn request_body(request: &LlmRequest) -> Value {
        json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "seed": request.seed,
            "max_tokens": request.max_response_tokens,
            "messages": [{ "role": "user", "content": request.prompt_text }],
        })
    }

    pub fn parse_response(value: &Value, latency: Duration) -> LlmResponse {
        // a null/missing content is a refusal: recorded as empty text
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        LlmResponse {
            text,
            backend_fingerprint: value
                .get("system_fingerprint")
                .and_then(Value::as_str)
                .unwrap_or("")
                .to_string(),
            latency,
            input_tokens: value.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            output_tokens: value
                .pointer("/usage/completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
        }
    }
}

impl ChatBackend for RemoteChatBackend {
    fn id(&self) -> &str {
        "remote"
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = RemoteChatBackend::request_body(request);
        let started = Instant::now();
        let value = with_retries(&self.retry, || {
            let response = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send()
                .map_err(|e| (e.to_string(), None))?;
            let status = response.status().as_u16();
            if status != 200 {
                let text = response.text().unwrap_or_default();
                return Err((format!("status {status}: {text}"), Some(status)));
            }
            response.json::<Value>().map_err(|e| (e.to_string(), None))
        })
        .map_err(|(attempts, message)| LlmError::Transport { attempts, message })?;
        Ok(RemoteChatBackend::parse_response(&value, started.elapsed()))
    }
}
