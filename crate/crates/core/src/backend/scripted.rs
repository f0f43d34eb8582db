use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use serde::Deserialize;

use super::{BackendError, CallContext, CallStage, ChatBackend, ChatRequest, ChatResponse};
use crate::game::{AgentId, Role};
use crate::protocol::RequestKind;

/// Day or turn matcher: a number, an inclusive range `"a-b"`, or `"*"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumberPattern {
    Any,
    Range(u32, u32),
}

impl NumberPattern {
    pub fn matches(self, value: Option<u32>) -> bool {
        match (self, value) {
            (NumberPattern::Any, _) => true,
            (NumberPattern::Range(lo, hi), Some(v)) => (lo..=hi).contains(&v),
            (NumberPattern::Range(..), None) => false,
        }
    }
}

impl FromStr for NumberPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "*" {
            return Ok(NumberPattern::Any);
        }
        let num = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("bad number pattern {s:?}"));
        match s.split_once('-') {
            Some((lo, hi)) => Ok(NumberPattern::Range(num(lo)?, num(hi)?)),
            None => num(s).map(|n| NumberPattern::Range(n, n)),
        }
    }
}

impl<'de> Deserialize<'de> for NumberPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(NumberPattern::Range(n, n)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    SelfId,
    Role,
    Day,
    Turn,
    Candidate(usize),
    AnyCandidate,
    Prompt,
    PromptLine(String),
}

/// Reply text with `{...}` tokens filled from the call.
///
/// Tokens: `{self}`, `{role}`, `{day}`, `{turn}`, `{candidate:N}` (N-th living
/// other player, wrapping), `{candidate:any}` (a candidate picked by a hash of
/// the prompt), `{prompt}`, and `{prompt_line:MARKER}` (the rest of the first
/// prompt line containing MARKER). A reply of exactly `!error` or `!auth`
/// fails the call with a transport or authentication error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplyTemplate {
    pieces: Vec<Piece>,
    raw: String,
}

impl FromStr for ReplyTemplate {
    type Err = String;

    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        let mut pieces = Vec::new();
        let mut rest = raw;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_string()));
            }
            let close = rest[open..].find('}').ok_or_else(|| format!("unclosed token in reply {raw:?}"))? + open;
            let token = &rest[open + 1..close];
            let piece = match token.split_once(':') {
                None => match token {
                    "self" => Piece::SelfId,
                    "role" => Piece::Role,
                    "day" => Piece::Day,
                    "turn" => Piece::Turn,
                    "prompt" => Piece::Prompt,
                    _ => return Err(format!("unknown reply token {{{token}}}")),
                },
                Some(("candidate", "any")) => Piece::AnyCandidate,
                Some(("candidate", n)) => {
                    Piece::Candidate(n.parse().map_err(|_| format!("bad candidate index in {{{token}}}"))?)
                }
                Some(("prompt_line", marker)) if !marker.is_empty() => Piece::PromptLine(marker.to_string()),
                _ => return Err(format!("unknown reply token {{{token}}}")),
            };
            pieces.push(piece);
            rest = &rest[close + 1..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(ReplyTemplate { pieces, raw: raw.to_string() })
    }
}

impl<'de> Deserialize<'de> for ReplyTemplate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

// FNV-1a; stable across platforms and releases, unlike std's hasher.
fn prompt_hash(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl ReplyTemplate {
    pub fn render(&self, request: &ChatRequest) -> Result<String, BackendError> {
        match self.raw.trim() {
            "!error" => return Err(BackendError::Transport("scripted failure".to_string())),
            "!auth" => return Err(BackendError::Auth("scripted authentication failure".to_string())),
            _ => {}
        }
        let ctx = request.context.as_ref();
        let candidates: &[AgentId] = ctx.map(|c| c.candidates.as_slice()).unwrap_or(&[]);
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::SelfId => out.push_str(&ctx.map(|c| c.agent.to_string()).unwrap_or_default()),
                Piece::Role => out.push_str(&ctx.map(|c| c.role.name().to_string()).unwrap_or_default()),
                Piece::Day => out.push_str(&ctx.map(|c| c.day.to_string()).unwrap_or_default()),
                Piece::Turn => out.push_str(&ctx.and_then(|c| c.turn).map(|t| t.to_string()).unwrap_or_default()),
                Piece::Candidate(n) if !candidates.is_empty() => {
                    out.push_str(&candidates[n % candidates.len()].to_string())
                }
                Piece::AnyCandidate if !candidates.is_empty() => {
                    let pick = prompt_hash(&request.user_text) as usize % candidates.len();
                    out.push_str(&candidates[pick].to_string())
                }
                Piece::Candidate(_) | Piece::AnyCandidate => {}
                Piece::Prompt => out.push_str(&request.user_text),
                Piece::PromptLine(marker) => {
                    if let Some(line) = request.user_text.lines().find(|l| l.contains(marker.as_str())) {
                        let at = line.find(marker.as_str()).unwrap_or(0) + marker.len();
                        out.push_str(line[at..].trim());
                    }
                }
            }
        }
        Ok(out)
    }
}

fn de_opt_parse<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: FromStr,
    T::Err: std::fmt::Display,
{
    Option::<String>::deserialize(d)?.map(|s| s.parse::<T>().map_err(serde::de::Error::custom)).transpose()
}

/// One scripted rule. Absent match fields match anything.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default, deserialize_with = "de_opt_parse")]
    pub role: Option<Role>,
    #[serde(default, deserialize_with = "de_opt_parse")]
    pub request: Option<RequestKind>,
    #[serde(default)]
    pub stage: Option<CallStage>,
    #[serde(default)]
    pub day: Option<NumberPattern>,
    #[serde(default)]
    pub turn: Option<NumberPattern>,
    #[serde(default)]
    pub contains: Option<String>,
    pub reply: ReplyTemplate,
}

impl ScriptRule {
    pub fn is_catch_all(&self) -> bool {
        self.role.is_none()
            && self.request.is_none()
            && self.stage.is_none()
            && self.day.is_none()
            && self.turn.is_none()
            && self.contains.is_none()
    }

    fn matches(&self, request: &ChatRequest) -> bool {
        if let Some(needle) = &self.contains {
            if !request.user_text.contains(needle.as_str()) {
                return false;
            }
        }
        let needs_context = self.role.is_some()
            || self.request.is_some()
            || self.stage.is_some()
            || self.day.is_some()
            || self.turn.is_some();
        match (&request.context, needs_context) {
            (_, false) => true,
            (None, true) => false,
            (Some(ctx), true) => self.matches_context(ctx),
        }
    }

    fn matches_context(&self, ctx: &CallContext) -> bool {
        self.role.is_none_or(|r| r == ctx.role)
            && self.request.is_none_or(|k| k == ctx.request)
            && self.stage.is_none_or(|s| s == ctx.stage)
            && self.day.is_none_or(|p| p.matches(Some(ctx.day)))
            && self.turn.is_none_or(|p| p.matches(ctx.turn))
    }
}

/// Ordered rule list; the first matching rule answers.
#[derive(Debug, Clone, Deserialize)]
pub struct Script {
    #[serde(rename = "rule")]
    pub rules: Vec<ScriptRule>,
}

const SELFPLAY_SCRIPT: &str = include_str!("../../assets/scripts/selfplay.toml");

impl FromStr for Script {
    type Err = BackendError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let script: Script = toml::from_str(text).map_err(|e| BackendError::Script(e.to_string()))?;
        if !script.rules.iter().any(ScriptRule::is_catch_all) {
            return Err(BackendError::Script("script has no catch-all rule".to_string()));
        }
        Ok(script)
    }
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Script(format!("reading {}: {e}", path.display())))?;
        text.parse()
    }

    /// Built-in script for offline self-play.
    pub fn selfplay() -> Self {
        SELFPLAY_SCRIPT.parse().expect("bundled script is valid")
    }

    pub fn reply_for(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let rule = self
            .rules
            .iter()
            .find(|r| r.matches(request))
            .ok_or_else(|| BackendError::Script("no rule matched".to_string()))?;
        rule.reply.render(request)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedCall {
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// Deterministic rule-driven backend. Unless built with [`ScriptedBackend::unrecorded`],
/// it keeps every answered call for inspection.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Script,
    record: bool,
    calls: Mutex<Vec<RecordedCall>>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        ScriptedBackend { script, record: true, calls: Mutex::new(Vec::new()) }
    }

    /// Answers the same way but keeps nothing; for long tournaments.
    pub fn unrecorded(script: Script) -> Self {
        ScriptedBackend { record: false, ..Self::new(script) }
    }

    pub fn recorded_calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().expect("recorder poisoned").clone()
    }

    pub fn clear(&self) {
        self.calls.lock().expect("recorder poisoned").clear();
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".to_string()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        // Hold the lock across rule evaluation so the record order is the call order.
        let mut calls = self.calls.lock().expect("recorder poisoned");
        let text = self.script.reply_for(request)?;
        let response = ChatResponse { text, latency_ms: 0, backend_id: self.id() };
        if self.record {
            calls.push(RecordedCall { request: request.clone(), response: response.clone() });
        }
        Ok(response)
    }
}
