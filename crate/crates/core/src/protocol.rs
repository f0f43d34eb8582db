//! Server/agent wire format.
//!
//! Every request is one JSON object on one line:
//! `{"request": ..., "gameInfo": {...}, "turn": n}`, where `turn` is present
//! only for talk requests. Agents answer with one plain-text line: the
//! utterance for a talk request, or a sentence whose last `Agent[0k]` mention
//! names the target of a vote, divination or attack.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{AgentId, DivineRecord, GameState, Phase, Role, TalkEntry, SKIP};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("undecodable packet: {0}")]
    BadPacket(#[from] serde_json::Error),
    #[error("malformed {kind} response: {raw:?}")]
    MalformedResponse { kind: RequestKind, raw: String },
    #[error("protocol violation: {0}")]
    Violation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestKind {
    Initialize,
    DailyInitialize,
    Talk,
    Vote,
    Divine,
    Attack,
    Finish,
}

impl RequestKind {
    pub fn name(self) -> &'static str {
        match self {
            RequestKind::Initialize => "INITIALIZE",
            RequestKind::DailyInitialize => "DAILY_INITIALIZE",
            RequestKind::Talk => "TALK",
            RequestKind::Vote => "VOTE",
            RequestKind::Divine => "DIVINE",
            RequestKind::Attack => "ATTACK",
            RequestKind::Finish => "FINISH",
        }
    }

    /// Kinds answered with a target agent.
    pub fn is_action(self) -> bool {
        matches!(self, RequestKind::Vote | RequestKind::Divine | RequestKind::Attack)
    }

    /// Kinds the server waits an answer for.
    pub fn expects_reply(self) -> bool {
        self != RequestKind::Finish
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RequestKind {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase()))
            .map_err(|_| ProtocolError::Violation(format!("unknown request kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Alive,
    Exiled,
    Attacked,
}

/// What one player is allowed to know about the game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GameInfoView {
    pub day: u32,
    pub phase: String,
    #[serde(rename = "agentIdx")]
    pub self_id: AgentId,
    #[serde(rename = "role")]
    pub self_role: Role,
    pub status_map: BTreeMap<AgentId, Status>,
    pub talk_list: Vec<TalkEntry>,
    #[serde(rename = "divineResults")]
    pub my_divine_results: Vec<DivineRecord>,
    pub executed: Option<AgentId>,
    pub attacked: Option<AgentId>,
}

impl GameInfoView {
    pub fn alive(&self) -> Vec<AgentId> {
        self.status_map.iter().filter(|(_, s)| **s == Status::Alive).map(|(id, _)| *id).collect()
    }

    /// Living players other than the receiver, ascending.
    pub fn alive_others(&self) -> Vec<AgentId> {
        self.alive().into_iter().filter(|id| *id != self.self_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub request: RequestKind,
    #[serde(rename = "gameInfo")]
    pub game_info: GameInfoView,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentResponse {
    Talk(String),
    Target(AgentId),
    Ack,
}

/// Projects the game state onto what `receiver` may see.
pub fn build_game_info_view(state: &GameState, receiver: AgentId) -> GameInfoView {
    let mut status_map: BTreeMap<AgentId, Status> = state.assignment().keys().map(|&id| (id, Status::Alive)).collect();
    for &(_, id) in state.exile_history() {
        status_map.insert(id, Status::Exiled);
    }
    for a in state.attack_history() {
        status_map.insert(a.victim, Status::Attacked);
    }
    let role = state.role_of(receiver);
    let my_divine_results = if role == Role::Seer { state.divine_history().to_vec() } else { Vec::new() };
    let day = match state.phase() {
        Phase::Finished => state
            .exile_history()
            .iter()
            .map(|(d, _)| *d)
            .chain(state.attack_history().iter().map(|a| a.day))
            .max()
            .unwrap_or(0),
        p => p.day(),
    };
    GameInfoView {
        day,
        phase: state.phase().name().to_string(),
        self_id: receiver,
        self_role: role,
        status_map,
        talk_list: state.talk_history().to_vec(),
        my_divine_results,
        executed: state.exile_history().last().map(|&(_, id)| id),
        attacked: state.attack_history().last().map(|a| a.victim),
    }
}

/// One newline-terminated JSON line.
pub fn encode_packet(packet: &Packet) -> String {
    let mut line = serde_json::to_string(packet).expect("packets always serialize");
    line.push('\n');
    line
}

pub fn decode_packet(line: &str) -> Result<Packet, ProtocolError> {
    Ok(serde_json::from_str(line.trim_end_matches(['\r', '\n']))?)
}

/// Last `Agent[0k]` mention in `text`, k in 1..=5.
pub fn last_agent_mention(text: &str) -> Option<AgentId> {
    const PREFIX: &str = "Agent[0";
    text.match_indices(PREFIX)
        .filter_map(|(at, _)| {
            let rest = &text.as_bytes()[at + PREFIX.len()..];
            match rest {
                [d @ b'1'..=b'5', b']', ..] => AgentId::new(d - b'0').ok(),
                _ => None,
            }
        })
        .last()
}

/// Interprets one agent reply line for a request of `kind`.
pub fn decode_response(kind: RequestKind, raw: &str) -> Result<AgentResponse, ProtocolError> {
    let line = raw.trim_end_matches(['\r', '\n']);
    match kind {
        RequestKind::Talk => Ok(AgentResponse::Talk(line.to_string())),
        k if k.is_action() => last_agent_mention(line)
            .map(AgentResponse::Target)
            .ok_or_else(|| ProtocolError::MalformedResponse { kind, raw: line.to_string() }),
        _ => Ok(AgentResponse::Ack),
    }
}

/// Reply line for a response; talk text is flattened onto one line.
pub fn encode_response(response: &AgentResponse) -> String {
    let body = match response {
        AgentResponse::Talk(text) => {
            let flat = text.split(['\r', '\n']).map(str::trim).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" ");
            if flat.is_empty() {
                SKIP.to_string()
            } else {
                flat
            }
        }
        AgentResponse::Target(id) => id.to_string(),
        AgentResponse::Ack => "OK".to_string(),
    };
    format!("{body}\n")
}
