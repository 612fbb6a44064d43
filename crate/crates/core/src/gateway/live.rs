//! HTTP providers for the OpenAI chat-completions and Anthropic messages APIs.
//!
//! No sampling parameters are sent, so both services apply their defaults.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{CompletionRequest, Provider, ProviderError, Reply, Speaker};

fn client() -> Result<Client, ProviderError> {
    Client::builder()
        .timeout(Duration::from_secs(300))
        .build()
        .map_err(|e| ProviderError::Fatal(format!("http client: {e}")))
}

fn api_key(env: &str) -> Result<String, ProviderError> {
    std::env::var(env).map_err(|_| ProviderError::Fatal(format!("environment variable {env} is not set")))
}

fn classify(status: StatusCode, body: &str) -> ProviderError {
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        ProviderError::Transient(format!("{status}: {body}"))
    } else {
        ProviderError::Fatal(format!("{status}: {body}"))
    }
}

fn post(req: reqwest::blocking::RequestBuilder) -> Result<Value, ProviderError> {
    let resp = req.send().map_err(|e| {
        if e.is_timeout() || e.is_connect() {
            ProviderError::Transient(e.to_string())
        } else {
            ProviderError::Fatal(e.to_string())
        }
    })?;
    let status = resp.status();
    let body = resp
        .text()
        .map_err(|e| ProviderError::Transient(e.to_string()))?;
    if !status.is_success() {
        return Err(classify(status, &body));
    }
    serde_json::from_str(&body).map_err(|e| ProviderError::Fatal(format!("bad json: {e}")))
}

pub struct OpenAiProvider {
    client: Client,
    base_url: String,
    key_env: String,
}

impl OpenAiProvider {
    pub fn new(base_url: Option<String>, key_env: impl Into<String>) -> Result<Self, ProviderError> {
        Ok(Self {
            client: client()?,
            base_url: base_url.unwrap_or_else(|| "https://api.openai.com/v1".into()),
            key_env: key_env.into(),
        })
    }
}

impl Provider for OpenAiProvider {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Reply, ProviderError> {
        let messages: Vec<Value> = request
            .transcript
            .iter()
            .map(|t| {
                let role = match t.speaker {
                    Speaker::User => "user",
                    Speaker::Model => "assistant",
                };
                json!({ "role": role, "content": t.text })
            })
            .collect();
        let body = json!({ "model": request.role.model_id, "messages": messages });
        let req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(api_key(&self.key_env)?)
            .json(&body);
        let value = post(req)?;
        let choice = &value["choices"][0];
        if let Some(refusal) = choice["message"]["refusal"].as_str() {
            return Ok(Reply::Refused(refusal.to_string()));
        }
        if choice["finish_reason"] == "content_filter" {
            return Ok(Reply::Refused("content_filter".into()));
        }
        choice["message"]["content"]
            .as_str()
            .map(|s| Reply::Text(s.to_string()))
            .ok_or_else(|| ProviderError::Fatal("response carried no message content".into()))
    }

    fn is_live(&self) -> bool {
        true
    }
}

pub struct AnthropicProvider {
    client: Client,
    base_url: String,
    key_env: String,
    max_tokens: u32,
}

impl AnthropicProvider {
    pub fn new(base_url: Option<String>, key_env: impl Into<String>) -> Result<Self, ProviderError> {
        Ok(Self {
            client: client()?,
            base_url: base_url.unwrap_or_else(|| "https://api.anthropic.com/v1".into()),
            key_env: key_env.into(),
            // required by the API; not a sampling parameter
            max_tokens: 4096,
        })
    }
}

impl Provider for AnthropicProvider {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Reply, ProviderError> {
        let messages: Vec<Value> = request
            .transcript
            .iter()
            .map(|t| {
                let role = match t.speaker {
                    Speaker::User => "user",
                    Speaker::Model => "assistant",
                };
                json!({ "role": role, "content": t.text })
            })
            .collect();
        let body = json!({
            "model": request.role.model_id,
            "max_tokens": self.max_tokens,
            "messages": messages,
        });
        let req = self
            .client
            .post(format!("{}/messages", self.base_url))
            .header("x-api-key", api_key(&self.key_env)?)
            .header("anthropic-version", "2023-06-01")
            .json(&body);
        let value = post(req)?;
        if value["stop_reason"] == "refusal" {
            return Ok(Reply::Refused("refusal".into()));
        }
        let text: String = value["content"]
            .as_array()
            .map(|blocks| {
                blocks
                    .iter()
                    .filter_map(|b| b["text"].as_str())
                    .collect::<Vec<_>>()
                    .join("")
            })
            .unwrap_or_default();
        if text.is_empty() {
            return Err(ProviderError::Fatal("response carried no text".into()));
        }
        Ok(Reply::Text(text))
    }

    fn is_live(&self) -> bool {
        true
    }
}
