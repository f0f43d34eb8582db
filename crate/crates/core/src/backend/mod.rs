//! Chat-completion backends.
//!
//! Agents talk to a model through [`ChatBackend`]: one system message plus
//! one user message in, one completion out. [`ApiBackend`] posts to a
//! chat-completions HTTP endpoint; [`ScriptedBackend`] answers from an ordered
//! rule list and records every call, so whole games run offline and
//! reproducibly.

mod api;
mod retry;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{AgentId, Role};
use crate::protocol::RequestKind;

pub use api::{ApiBackend, ApiConfig};
pub use retry::{complete_with_retry, RetryPolicy};
pub use scripted::{NumberPattern, RecordedCall, ReplyTemplate, Script, ScriptRule, ScriptedBackend};

pub const DEFAULT_TEMPERATURE: f32 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("bad request: {0}")]
    Precondition(String),
    #[error("unusable reply: {0}")]
    BadReply(String),
    #[error("script error: {0}")]
    Script(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Timeout)
    }
}

/// Which step of the agent pipeline issued a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStage {
    Analysis,
    Response,
    Persuasion,
    Vote,
}

/// Game coordinates of a call. The API backend ignores them; scripts match on them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallContext {
    pub agent: AgentId,
    pub role: Role,
    pub request: RequestKind,
    pub stage: CallStage,
    pub day: u32,
    pub turn: Option<u32>,
    /// Living players other than the caller, ascending.
    pub candidates: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f32,
    pub max_tokens: u32,
    pub context: Option<CallContext>,
}

impl ChatRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        ChatRequest {
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            context: None,
        }
    }

    pub fn with_context(mut self, context: CallContext) -> Self {
        self.context = Some(context);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.user_text.trim().is_empty() {
            return Err(BackendError::Precondition("user_text is empty".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    /// Raw completion, untrimmed.
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}
