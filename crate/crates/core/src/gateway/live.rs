//! Live JSON-over-HTTPS chat-completion backend with retry/backoff and a
//! record-and-replay transcript log.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::GatewayError;
use crate::gateway::scripted::ScriptEntry;
use crate::gateway::{Backend, ChatRequest, ChatResponse, Gateway, Usage, MAX_RESPONSE_BYTES};

/// Env var holding the API key.
pub const API_KEY_ENV: &str = "CAUSAL_EVOLVE_API_KEY";

#[derive(Debug, Clone, Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

pub struct LiveGateway {
    endpoint: String,
    model: String,
    api_key: String,
    max_retries: u32,
    client: reqwest::blocking::Client,
    /// JSONL of `{tag, text}` pairs; a completed transcript can be replayed
    /// verbatim through the scripted backend.
    transcript: Option<Mutex<std::fs::File>>,
}

impl LiveGateway {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
        max_retries: u32,
        transcript_path: Option<PathBuf>,
    ) -> Result<Self, GatewayError> {
        let api_key = api_key.into();
        if api_key.is_empty() {
            return Err(GatewayError::NotConfigured(format!(
                "empty API key (set {API_KEY_ENV})"
            )));
        }
        let transcript = match transcript_path {
            Some(p) => Some(Mutex::new(
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| GatewayError::NotConfigured(e.to_string()))?,
            )),
            None => None,
        };
        Ok(LiveGateway {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            max_retries,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .map_err(|e| GatewayError::NotConfigured(e.to_string()))?,
            transcript,
        })
    }

    /// One HTTP attempt. The error flag marks whether a retry is warranted
    /// (transport failures, 429, 5xx).
    fn post_once(&self, request: &ChatRequest) -> Result<ChatResponse, (bool, String)> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err((true, format!("retryable status {status}")));
        }
        if !status.is_success() {
            return Err((false, format!("status {status}")));
        }
        let text = resp.text().map_err(|e| (true, e.to_string()))?;
        if text.len() > MAX_RESPONSE_BYTES {
            return Err((false, format!("response of {} bytes exceeds cap", text.len())));
        }
        let wire: WireResponse =
            serde_json::from_str(&text).map_err(|e| (false, e.to_string()))?;
        let content = wire
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or((false, "response has no choices".to_string()))?;
        let usage = wire
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(ChatResponse {
            text: content,
            usage,
            backend: Backend::Live,
        })
    }
}

impl Gateway for LiveGateway {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut last_err = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(250 * (1 << (attempt - 1).min(6))));
            }
            match self.post_once(request) {
                Ok(resp) => {
                    if let Some(t) = &self.transcript {
                        let entry = ScriptEntry {
                            tag: request.tag,
                            text: resp.text.clone(),
                        };
                        let mut f = t.lock().unwrap();
                        let _ = serde_json::to_writer(&mut *f, &entry);
                        let _ = f.write_all(b"\n");
                    }
                    return Ok(resp);
                }
                Err((retryable, e)) => {
                    last_err = e;
                    if !retryable {
                        return Err(GatewayError::Transport {
                            attempts: attempt + 1,
                            msg: last_err,
                        });
                    }
                }
            }
        }
        Err(GatewayError::Transport {
            attempts: self.max_retries + 1,
            msg: last_err,
        })
    }
}
