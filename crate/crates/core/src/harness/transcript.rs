//! Human-readable transcripts.
//!
//! The format is line oriented and lossless: [`parse_transcript`] rebuilds
//! the log a transcript was rendered from, so rendering is idempotent. Tally
//! lines are derived from the votes and are skipped when parsing.

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use crate::game::{
    vote_counts, AgentId, AttackRecord, DivineRecord, GameOutcome, Phase, Role, Species, TalkEntry, Team, VoteRecord,
    WinReason,
};
use crate::protocol::RequestKind;

use super::log::{FallbackReason, GameLog, LogEvent};
use super::replay::ReplayError;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("transcript line {line}: {message}")]
pub struct TranscriptError {
    pub line: usize,
    pub message: String,
}

fn names(ids: &[AgentId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn phase_header(phase: Phase) -> String {
    match phase {
        Phase::Day0Greeting => "== Day 0: greetings ==".to_string(),
        Phase::Night0Divine => "== Night 0: divination ==".to_string(),
        Phase::DayTalk { day, turn } => format!("== Day {day}, talk turn {turn} =="),
        Phase::NightVote { day } => format!("== Night {day}: vote =="),
        Phase::NightAttack { day } => format!("== Night {day}: attack =="),
        Phase::NightDivine { day } => format!("== Night {day}: divination =="),
        Phase::Finished => "== Game over ==".to_string(),
    }
}

fn reason_words(reason: WinReason) -> &'static str {
    match reason {
        WinReason::WerewolfExiled => "werewolf exiled",
        WinReason::ParityReached => "parity reached",
    }
}

fn tally_line(votes: &[VoteRecord]) -> String {
    let mut counts: Vec<(AgentId, usize)> = vote_counts(votes).into_iter().collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let parts: Vec<String> = counts.iter().map(|(id, n)| format!("{id} {n}")).collect();
    format!("Tally: {}", parts.join(", "))
}

/// Day-by-day transcript of a log. Fails on a log whose headers are missing or misplaced.
pub fn render_replay(log: &GameLog) -> Result<String, ReplayError> {
    let config = log.config()?;
    let assignment = log.assignment()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Game seed {}, {} talk turns per day, language {}",
        config.rng_seed, config.talk_turns_per_day, config.language_pack
    );
    let roles: Vec<String> = assignment.iter().map(|(id, r)| format!("{id} {r}")).collect();
    let _ = writeln!(out, "Roles: {}", roles.join(", "));
    let mut pending_votes: Vec<VoteRecord> = Vec::new();
    for (index, line) in log.lines().iter().enumerate().skip(2) {
        let bad = |message: &str| ReplayError::Event { index, kind: line.event.kind(), message: message.to_string() };
        match &line.event {
            LogEvent::Config { .. } | LogEvent::Assignment { .. } => return Err(bad("header repeated mid-log")),
            LogEvent::Phase { phase, day, turn, alive } => {
                let p = Phase::from_parts(phase, *day, *turn).map_err(|e| bad(&e.to_string()))?;
                let _ = write!(out, "\n{}\nAlive: {}\n", phase_header(p), names(alive));
            }
            LogEvent::Talk(t) => {
                let _ = writeln!(out, "{}: {}", t.speaker, t.text);
            }
            LogEvent::Vote(v) => {
                pending_votes.push(*v);
                let _ = writeln!(out, "{} votes for {}", v.voter, v.target);
            }
            LogEvent::TieBreak { leaders, chosen, .. } => {
                if !pending_votes.is_empty() {
                    let _ = writeln!(out, "{}", tally_line(&pending_votes));
                    pending_votes.clear();
                }
                let _ = writeln!(out, "Tie between {} broken at random: {chosen}", names(leaders));
            }
            LogEvent::Exile { agent, .. } => {
                if !pending_votes.is_empty() {
                    let _ = writeln!(out, "{}", tally_line(&pending_votes));
                    pending_votes.clear();
                }
                let _ = writeln!(out, "{agent} is exiled");
            }
            LogEvent::Attack(a) => {
                let _ = writeln!(out, "{} attacks {}", a.attacker, a.victim);
            }
            LogEvent::Divine(d) => {
                let _ = writeln!(out, "{} divines {}: {}", d.seer, d.target, d.result.word());
            }
            LogEvent::Fallback { day, agent, request, reason, chosen } => {
                let _ = write!(out, "Fallback on day {day}: {agent} {request} {}", reason.word());
                if let Some(c) = chosen {
                    let _ = write!(out, " -> {c}");
                }
                out.push('\n');
            }
            LogEvent::Outcome(o) => {
                let _ = write!(
                    out,
                    "\n{}\nWinner: {} team ({})\n",
                    phase_header(Phase::Finished),
                    o.winner,
                    reason_words(o.reason)
                );
            }
            LogEvent::Aborted { reason } => {
                let _ = writeln!(out, "Game aborted: {reason}");
            }
        }
    }
    Ok(out)
}

struct Parser {
    log: GameLog,
    phase: Option<Phase>,
    line: usize,
}

impl Parser {
    fn err(&self, message: impl Into<String>) -> TranscriptError {
        TranscriptError { line: self.line, message: message.into() }
    }

    fn agent(&self, s: &str) -> Result<AgentId, TranscriptError> {
        s.trim().parse().map_err(|_| self.err(format!("not an agent: {s:?}")))
    }

    fn agents(&self, s: &str) -> Result<Vec<AgentId>, TranscriptError> {
        s.split(", ").map(|a| self.agent(a)).collect()
    }

    fn phase(&self) -> Result<Phase, TranscriptError> {
        self.phase.ok_or_else(|| self.err("event before any phase header"))
    }

    fn num(&self, s: &str) -> Result<u32, TranscriptError> {
        s.trim().parse().map_err(|_| self.err(format!("not a number: {s:?}")))
    }

    fn header(&self, inner: &str) -> Result<Option<Phase>, TranscriptError> {
        if inner == "Game over" {
            return Ok(None);
        }
        let phase = if let Some(rest) = inner.strip_prefix("Day ") {
            match rest.split_once(", talk turn ") {
                Some((d, t)) => Phase::DayTalk { day: self.num(d)?, turn: self.num(t)? },
                None if rest == "0: greetings" => Phase::Day0Greeting,
                None => return Err(self.err("unknown day header")),
            }
        } else if let Some(rest) = inner.strip_prefix("Night ") {
            let (d, what) = rest.split_once(": ").ok_or_else(|| self.err("unknown night header"))?;
            let day = self.num(d)?;
            match what {
                "vote" => Phase::NightVote { day },
                "attack" => Phase::NightAttack { day },
                "divination" if day == 0 => Phase::Night0Divine,
                "divination" => Phase::NightDivine { day },
                _ => return Err(self.err("unknown night header")),
            }
        } else {
            return Err(self.err("unknown header"));
        };
        Ok(Some(phase))
    }

    fn parse_line(&mut self, text: &str) -> Result<(), TranscriptError> {
        if let Some(rest) = text.strip_prefix("Game seed ") {
            let parts: Vec<&str> = rest.split(", ").collect();
            let [seed, turns, lang] = parts.as_slice() else { return Err(self.err("bad config line")) };
            let seed = seed.parse().map_err(|_| self.err("bad seed"))?;
            let turns = self.num(turns.strip_suffix(" talk turns per day").ok_or_else(|| self.err("bad turns"))?)?;
            let language = lang.strip_prefix("language ").ok_or_else(|| self.err("bad language"))?.to_string();
            self.log.push(LogEvent::Config { seed, talk_turns: turns, language });
        } else if let Some(rest) = text.strip_prefix("Roles: ") {
            let mut roles = BTreeMap::new();
            for part in rest.split(", ") {
                let (id, role) = part.split_once(' ').ok_or_else(|| self.err("bad role entry"))?;
                let role: Role = role.parse().map_err(|_| self.err(format!("unknown role {role:?}")))?;
                roles.insert(self.agent(id)?, role);
            }
            self.log.push(LogEvent::Assignment { roles });
        } else if let Some(inner) = text.strip_prefix("== ").and_then(|t| t.strip_suffix(" ==")) {
            self.phase = self.header(inner)?;
        } else if let Some(rest) = text.strip_prefix("Alive: ") {
            let phase = self.phase()?;
            let alive = if rest.is_empty() { Vec::new() } else { self.agents(rest)? };
            self.log.push(LogEvent::phase(phase, alive));
        } else if text.starts_with("Tally: ") {
        } else if let Some(rest) = text.strip_prefix("Tie between ") {
            let (leaders, chosen) = rest.split_once(" broken at random: ").ok_or_else(|| self.err("bad tie line"))?;
            let day = self.phase()?.day();
            let event = LogEvent::TieBreak { day, leaders: self.agents(leaders)?, chosen: self.agent(chosen)? };
            self.log.push(event);
        } else if let Some(rest) = text.strip_prefix("Fallback on day ") {
            let (day, rest) = rest.split_once(": ").ok_or_else(|| self.err("bad fallback line"))?;
            let (action, chosen) = match rest.split_once(" -> ") {
                Some((a, c)) => (a, Some(self.agent(c)?)),
                None => (rest, None),
            };
            let parts: Vec<&str> = action.split(' ').collect();
            let [agent, request, reason] = parts.as_slice() else { return Err(self.err("bad fallback line")) };
            let request: RequestKind = request.parse().map_err(|_| self.err("bad request kind"))?;
            let reason = FallbackReason::from_word(reason).ok_or_else(|| self.err("bad fallback reason"))?;
            let event = LogEvent::Fallback { day: self.num(day)?, agent: self.agent(agent)?, request, reason, chosen };
            self.log.push(event);
        } else if let Some(rest) = text.strip_prefix("Winner: ") {
            let (team, reason) = rest.split_once(" team (").ok_or_else(|| self.err("bad winner line"))?;
            let winner = match team {
                "HUMAN" => Team::Human,
                "WEREWOLF" => Team::Werewolf,
                _ => return Err(self.err("unknown team")),
            };
            let reason = match reason.strip_suffix(')') {
                Some("werewolf exiled") => WinReason::WerewolfExiled,
                Some("parity reached") => WinReason::ParityReached,
                _ => return Err(self.err("unknown win reason")),
            };
            self.log.push(LogEvent::Outcome(GameOutcome { winner, reason }));
        } else if let Some(reason) = text.strip_prefix("Game aborted: ") {
            self.log.push(LogEvent::Aborted { reason: reason.to_string() });
        } else {
            self.parse_agent_line(text)?;
        }
        Ok(())
    }

    /// Lines that start with an agent name: talk, vote, exile, attack, divination.
    fn parse_agent_line(&mut self, text: &str) -> Result<(), TranscriptError> {
        let end = text.find(']').map(|i| i + 1).ok_or_else(|| self.err("unrecognised line"))?;
        let who = self.agent(&text[..end])?;
        let rest = &text[end..];
        let phase = self.phase()?;
        let day = phase.day();
        let event = if let Some(said) = rest.strip_prefix(": ") {
            let turn = phase.turn().ok_or_else(|| self.err("talk outside a talk turn"))?;
            LogEvent::Talk(TalkEntry { day, turn, speaker: who, text: said.to_string() })
        } else if let Some(t) = rest.strip_prefix(" votes for ") {
            LogEvent::Vote(VoteRecord { day, voter: who, target: self.agent(t)? })
        } else if rest == " is exiled" {
            LogEvent::Exile { day, agent: who }
        } else if let Some(t) = rest.strip_prefix(" attacks ") {
            LogEvent::Attack(AttackRecord { day, attacker: who, victim: self.agent(t)? })
        } else if let Some(r) = rest.strip_prefix(" divines ") {
            let (t, species) = r.split_once(": ").ok_or_else(|| self.err("bad divination line"))?;
            let result = match species {
                "human" => Species::Human,
                "werewolf" => Species::Werewolf,
                _ => return Err(self.err("unknown species")),
            };
            LogEvent::Divine(DivineRecord { day, seer: who, target: self.agent(t)?, result })
        } else {
            return Err(self.err("unrecognised line"));
        };
        self.log.push(event);
        Ok(())
    }
}

/// Rebuilds a log from its transcript. Line numbers in errors are 1-based.
pub fn parse_transcript(text: &str) -> Result<GameLog, TranscriptError> {
    let mut p = Parser { log: GameLog::default(), phase: None, line: 0 };
    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        p.parse_line(raw)?;
    }
    Ok(p.log)
}
