//! A self-contained arena for the five-player Werewolf game.
//!
//! * [`game`]: deterministic rules engine.
//! * [`protocol`]: newline-delimited JSON wire format and role-filtered views.
//! * [`server`]: game orchestration with timeouts and fallbacks.
//! * [`agent`]: the LLM agent (situation analysis, role prompts, scheduled persuasion, voting).
//! * [`backend`]: chat-completion backends (HTTP API and a scripted offline stand-in).
//! * [`harness`]: game logs, replay, self-play tournaments and win-rate tables.

pub mod agent;
pub mod backend;
pub mod game;
pub mod harness;
pub mod protocol;
pub mod seeded;
pub mod server;

pub use game::{AgentId, GameConfig, GameError, GameState, Phase, Role, Species, Team};
