//! Append-only game log, persisted as one JSON event per line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{
    AgentId, Assignment, AttackRecord, DivineRecord, GameConfig, GameOutcome, Phase, Role, TalkEntry, VoteRecord,
};
use crate::protocol::RequestKind;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {index}: {message}")]
    Parse { index: usize, message: String },
    #[error("log is missing its {0} header")]
    MissingHeader(&'static str),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    Timeout,
    Malformed,
    Illegal,
    Disconnected,
}

impl FallbackReason {
    pub fn word(self) -> &'static str {
        match self {
            FallbackReason::Timeout => "timeout",
            FallbackReason::Malformed => "malformed",
            FallbackReason::Illegal => "illegal",
            FallbackReason::Disconnected => "disconnected",
        }
    }

    pub fn from_word(word: &str) -> Option<Self> {
        [FallbackReason::Timeout, FallbackReason::Malformed, FallbackReason::Illegal, FallbackReason::Disconnected]
            .into_iter()
            .find(|r| r.word() == word)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Config {
        seed: u64,
        talk_turns: u32,
        language: String,
    },
    Assignment {
        #[serde(with = "seat_keys")]
        roles: BTreeMap<AgentId, Role>,
    },
    /// Entering a phase; `alive` is the living set at that boundary.
    Phase {
        phase: String,
        day: u32,
        turn: Option<u32>,
        alive: Vec<AgentId>,
    },
    Talk(TalkEntry),
    Vote(VoteRecord),
    TieBreak {
        day: u32,
        leaders: Vec<AgentId>,
        chosen: AgentId,
    },
    Exile {
        day: u32,
        agent: AgentId,
    },
    Attack(AttackRecord),
    Divine(DivineRecord),
    /// Precedes the action it replaced. `chosen` is `None` for talk (a Skip) and acknowledgements.
    Fallback {
        day: u32,
        agent: AgentId,
        request: RequestKind,
        reason: FallbackReason,
        chosen: Option<AgentId>,
    },
    Outcome(GameOutcome),
    Aborted {
        reason: String,
    },
}

impl LogEvent {
    pub fn phase(phase: Phase, alive: impl IntoIterator<Item = AgentId>) -> Self {
        LogEvent::Phase {
            phase: phase.name().to_string(),
            day: phase.day(),
            turn: phase.turn(),
            alive: alive.into_iter().collect(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LogEvent::Config { .. } => "config",
            LogEvent::Assignment { .. } => "assignment",
            LogEvent::Phase { .. } => "phase",
            LogEvent::Talk(_) => "talk",
            LogEvent::Vote(_) => "vote",
            LogEvent::TieBreak { .. } => "tie_break",
            LogEvent::Exile { .. } => "exile",
            LogEvent::Attack(_) => "attack",
            LogEvent::Divine(_) => "divine",
            LogEvent::Fallback { .. } => "fallback",
            LogEvent::Outcome(_) => "outcome",
            LogEvent::Aborted { .. } => "aborted",
        }
    }
}

/// Seat-keyed maps with string keys; flattened events are buffered, which
/// turns integer map keys into strings before they reach `AgentId`.
mod seat_keys {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::game::{AgentId, Role};

    pub fn serialize<S: Serializer>(map: &BTreeMap<AgentId, Role>, s: S) -> Result<S::Ok, S::Error> {
        map.iter().map(|(id, r)| (id.index().to_string(), *r)).collect::<BTreeMap<String, Role>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<AgentId, Role>, D::Error> {
        BTreeMap::<String, Role>::deserialize(d)?
            .into_iter()
            .map(|(k, r)| {
                let n: u8 = k.parse().map_err(D::Error::custom)?;
                AgentId::new(n).map(|id| (id, r)).map_err(D::Error::custom)
            })
            .collect()
    }
}

/// One log line. `seq` is a logical timestamp: the event's position in the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub seq: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GameLog {
    lines: Vec<LogLine>,
}

impl GameLog {
    /// Starts a log with its config and assignment headers.
    pub fn start(config: &GameConfig, assignment: &Assignment) -> Self {
        let mut log = GameLog::default();
        log.push(LogEvent::Config {
            seed: config.rng_seed,
            talk_turns: config.talk_turns_per_day,
            language: config.language_pack.clone(),
        });
        log.push(LogEvent::Assignment { roles: assignment.clone() });
        log
    }

    pub fn push(&mut self, event: LogEvent) {
        let seq = self.lines.len() as u64;
        self.lines.push(LogLine { seq, event });
    }

    pub fn lines(&self) -> &[LogLine] {
        &self.lines
    }

    pub fn events(&self) -> impl Iterator<Item = &LogEvent> {
        self.lines.iter().map(|l| &l.event)
    }

    pub fn config(&self) -> Result<GameConfig, LogError> {
        match self.lines.first().map(|l| &l.event) {
            Some(LogEvent::Config { seed, talk_turns, language }) => {
                Ok(GameConfig { talk_turns_per_day: *talk_turns, rng_seed: *seed, language_pack: language.clone() })
            }
            _ => Err(LogError::MissingHeader("config")),
        }
    }

    pub fn assignment(&self) -> Result<Assignment, LogError> {
        match self.lines.get(1).map(|l| &l.event) {
            Some(LogEvent::Assignment { roles }) => Ok(roles.clone()),
            _ => Err(LogError::MissingHeader("assignment")),
        }
    }

    pub fn outcome(&self) -> Option<GameOutcome> {
        self.events().find_map(|e| match e {
            LogEvent::Outcome(o) => Some(*o),
            _ => None,
        })
    }

    pub fn abort_reason(&self) -> Option<&str> {
        self.events().find_map(|e| match e {
            LogEvent::Aborted { reason } => Some(reason.as_str()),
            _ => None,
        })
    }

    pub fn is_aborted(&self) -> bool {
        self.abort_reason().is_some()
    }

    pub fn fallback_count(&self) -> usize {
        self.events().filter(|e| matches!(e, LogEvent::Fallback { .. })).count()
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&serde_json::to_string(line).expect("log lines always serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses NDJSON; `seq` must equal the line position.
    pub fn from_ndjson(text: &str) -> Result<Self, LogError> {
        let mut log = GameLog::default();
        for (index, raw) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let line: LogLine =
                serde_json::from_str(raw).map_err(|e| LogError::Parse { index, message: e.to_string() })?;
            if line.seq != index as u64 {
                return Err(LogError::Parse { index, message: format!("seq {} out of order", line.seq) });
            }
            log.lines.push(line);
        }
        Ok(log)
    }

    pub fn write_to(&self, path: &Path) -> Result<(), LogError> {
        fs::write(path, self.to_ndjson()).map_err(|source| LogError::Io { path: path.display().to_string(), source })
    }

    pub fn read_from(path: &Path) -> Result<Self, LogError> {
        let text =
            fs::read_to_string(path).map_err(|source| LogError::Io { path: path.display().to_string(), source })?;
        Self::from_ndjson(&text)
    }
}
