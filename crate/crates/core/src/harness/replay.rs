//! Re-simulation of a game log through the rules engine.
//!
//! Besides the state transitions, replay re-derives every seeded server
//! decision (speaking orders and tie-breaks) and checks the living set
//! recorded at each phase boundary.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::game::{self, AgentId, GameError, GameOutcome, GameState, Phase, PhaseEvent, VoteRecord};
use crate::seeded::{derive_rng, Stream};

use super::log::{GameLog, LogError, LogEvent};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("event {index} ({kind}): {message}")]
    Event { index: usize, kind: &'static str, message: String },
    #[error("log ends before the game finished")]
    Truncated,
    #[error("game was aborted: {0}")]
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub state: GameState,
    pub outcome: GameOutcome,
    /// Phase and living set at every boundary, in order.
    pub boundaries: Vec<(Phase, BTreeSet<AgentId>)>,
}

struct Replayer {
    state: GameState,
    votes: Vec<VoteRecord>,
    tie_break: Option<AgentId>,
    order: Vec<AgentId>,
    boundaries: Vec<(Phase, BTreeSet<AgentId>)>,
    outcome: Option<GameOutcome>,
}

pub fn replay(log: &GameLog) -> Result<ReplayReport, ReplayError> {
    if let Some(reason) = log.abort_reason() {
        return Err(ReplayError::Aborted(reason.to_string()));
    }
    let state = GameState::new(log.config()?, log.assignment()?).map_err(|e| ReplayError::Event {
        index: 0,
        kind: "config",
        message: e.to_string(),
    })?;
    let mut r = Replayer {
        state,
        votes: Vec::new(),
        tie_break: None,
        order: Vec::new(),
        boundaries: Vec::new(),
        outcome: None,
    };
    for (index, line) in log.lines().iter().enumerate().skip(2) {
        let err = |message: String| ReplayError::Event { index, kind: line.event.kind(), message };
        if r.outcome.is_some() {
            return Err(err("event after the outcome".into()));
        }
        r.apply(&line.event).map_err(err)?;
    }
    let outcome = r.outcome.ok_or(ReplayError::Truncated)?;
    Ok(ReplayReport { state: r.state, outcome, boundaries: r.boundaries })
}

fn ge(e: GameError) -> String {
    e.to_string()
}

impl Replayer {
    fn apply(&mut self, event: &LogEvent) -> Result<(), String> {
        let seed = self.state.config().rng_seed;
        match event {
            LogEvent::Config { .. } | LogEvent::Assignment { .. } => Err("duplicate header".into()),
            LogEvent::Phase { phase, day, turn, alive } => {
                let expected = Phase::from_parts(phase, *day, *turn).map_err(ge)?;
                if self.state.phase().is_talk() && self.state.phase() != expected {
                    self.state.step(PhaseEvent::TalkTurnCompleted).map_err(ge)?;
                }
                if self.state.phase() != expected {
                    return Err(format!("expected phase {:?}, log says {expected:?}", self.state.phase()));
                }
                let alive: BTreeSet<AgentId> = alive.iter().copied().collect();
                if &alive != self.state.alive() {
                    return Err(format!("living set differs at {expected:?}"));
                }
                if expected.is_talk() {
                    let (d, t) = (expected.day() as u64, expected.turn().unwrap_or(0) as u64);
                    let mut rng = derive_rng(seed, Stream::SpeakingOrder, &[d, t]);
                    self.order = game::speaking_order(self.state.alive(), &mut rng);
                    self.order.reverse();
                }
                self.boundaries.push((expected, alive));
                Ok(())
            }
            LogEvent::Talk(entry) => {
                match self.order.pop() {
                    Some(next) if next == entry.speaker => {}
                    other => return Err(format!("{} spoke out of order (expected {other:?})", entry.speaker)),
                }
                self.state.record_talk(entry.clone()).map_err(ge)
            }
            LogEvent::Vote(v) => {
                if !matches!(self.state.phase(), Phase::NightVote { .. }) {
                    return Err(format!("vote during {:?}", self.state.phase()));
                }
                self.votes.push(*v);
                Ok(())
            }
            LogEvent::TieBreak { leaders, chosen, .. } => {
                if leaders != &game::vote_leaders(&self.votes) || !leaders.contains(chosen) {
                    return Err("tie-break does not match the votes".into());
                }
                self.tie_break = Some(*chosen);
                Ok(())
            }
            LogEvent::Exile { day, agent } => {
                let mut rng = derive_rng(seed, Stream::TieBreak, &[*day as u64]);
                let tally = game::tally_votes(&self.votes, &mut rng).map_err(ge)?;
                if tally.exiled != *agent {
                    return Err(format!("seeded tally exiles {}, log says {agent}", tally.exiled));
                }
                if tally.was_tied() != self.tie_break.is_some() {
                    return Err("tie-break record does not match the tally".into());
                }
                let votes = std::mem::take(&mut self.votes);
                self.tie_break = None;
                self.state.step(PhaseEvent::VoteCompleted { votes, exiled: *agent }).map_err(ge)
            }
            LogEvent::Attack(a) => self.state.step(PhaseEvent::AttackCompleted(*a)).map_err(ge),
            LogEvent::Divine(d) => self.state.step(PhaseEvent::DivinationCompleted(*d)).map_err(ge),
            LogEvent::Fallback { .. } => Ok(()),
            LogEvent::Outcome(o) => {
                if self.state.outcome() != Some(*o) {
                    return Err(format!("logged outcome {o:?}, engine reached {:?}", self.state.outcome()));
                }
                self.outcome = Some(*o);
                Ok(())
            }
            LogEvent::Aborted { reason } => Err(format!("aborted: {reason}")),
        }
    }
}
