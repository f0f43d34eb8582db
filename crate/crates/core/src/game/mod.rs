//! Rules engine for the five-player game.
//!
//! One seer, one werewolf, one possessed and two villagers. Day 0 is a single
//! greeting turn followed by the seer's first divination; Days 1 and 2 each
//! have a fixed number of talk turns, then a night of vote, attack and
//! divination in that order. The game ends the moment the werewolf is exiled,
//! or when werewolves reach parity with human-species players.

mod rules;
mod state;
mod types;

use thiserror::Error;

pub use rules::{
    assign_roles, assign_roles_for_seed, divine, evaluate_winner, speaking_order, tally_votes, validate_assignment,
    vote_counts, vote_leaders, Assignment, Tally,
};
pub use state::{GameState, PhaseEvent};
pub use types::*;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("agent index {0} is outside 1..=5")]
    UnknownAgent(u8),
    #[error("not an agent name: {0:?}")]
    BadAgentName(String),
    #[error("unrecognised name {0:?}")]
    BadName(String),
    #[error("invalid game configuration: {0}")]
    InvalidConfig(String),
    #[error("no votes to tally")]
    NoVotes,
    #[error("protocol violation: {event} is not valid during {phase:?}")]
    PhaseMismatch { phase: Phase, event: &'static str },
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("game reached the day limit without a winner")]
    Unresolved,
}
