use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiConfig {
    /// Full chat-completions URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub url: String,
    /// Environment variable holding the bearer token. Unset means no auth header.
    pub api_key_env: String,
    pub model: String,
    pub timeout: Duration,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            url: "https://api.openai.com/v1/chat/completions".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            model: "gpt-4o-2024-05-13".to_string(),
            timeout: Duration::from_secs(60),
        }
    }
}

/// Client for an OpenAI-style chat-completions endpoint.
pub struct ApiBackend {
    config: ApiConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl ApiBackend {
    pub fn new(config: ApiConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(ApiBackend { config, api_key, client })
    }

    pub fn config(&self) -> &ApiConfig {
        &self.config
    }

    fn body(&self, request: &ChatRequest) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }
}

impl ChatBackend for ApiBackend {
    fn id(&self) -> String {
        format!("api:{}", self.config.model)
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let started = Instant::now();
        let mut http = self.client.post(&self.config.url).json(&self.body(request));
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => return Err(BackendError::Transport(format!("HTTP {status}"))),
            _ => {
                let detail = resp.text().unwrap_or_default();
                return Err(BackendError::BadReply(format!("HTTP {status}: {detail}")));
            }
        }
        let body: CompletionBody = resp.json().map_err(|e| BackendError::BadReply(e.to_string()))?;
        let text = body
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::BadReply("response has no choices".to_string()))?;
        Ok(ChatResponse { text, latency_ms: started.elapsed().as_millis() as u64, backend_id: self.id() })
    }
}
