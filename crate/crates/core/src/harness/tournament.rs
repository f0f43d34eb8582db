//! In-process self-play tournaments.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::agent::{Agent, AgentSettings, PromptLibrary};
use crate::backend::{ChatBackend, RetryPolicy};
use crate::game::{assign_roles_for_seed, AgentId, Assignment, GameConfig, Role, PLAYER_COUNT};
use crate::seeded::{agent_seed, derive_rng, game_seed, Stream};
use crate::server::{run_game, ConnectionSlot, LocalLink, ServerError, ServerOptions};

use super::log::{GameLog, LogError, LogEvent};
use super::HarnessError;

/// Cyclic role order for the rotation. The two villager positions are two
/// apart, so any run of consecutive games gives each seat a near-equal share.
const ROTATION_ORDER: [Role; PLAYER_COUNT] =
    [Role::Villager, Role::Werewolf, Role::Villager, Role::Seer, Role::Possessed];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    /// Within each block of five games every seat holds every position of
    /// the cyclic order once; seats are shuffled per block.
    LatinSquare,
    /// Independent seeded deal per game.
    Random,
}

pub fn rotation_assignment(tournament_seed: u64, index: usize) -> Assignment {
    let block = (index / PLAYER_COUNT) as u64;
    let shift = index % PLAYER_COUNT;
    let mut offsets: Vec<usize> = (0..PLAYER_COUNT).collect();
    offsets.shuffle(&mut derive_rng(tournament_seed, Stream::Rotation, &[block]));
    AgentId::all().zip(offsets).map(|(id, off)| (id, ROTATION_ORDER[(off + shift) % PLAYER_COUNT])).collect()
}

pub fn log_file_name(index: usize) -> String {
    format!("game_{index:04}.ndjson")
}

#[derive(Clone)]
pub struct TournamentConfig {
    pub games: usize,
    pub seed: u64,
    pub talk_turns: u32,
    pub language: String,
    pub rotation: Rotation,
    /// One backend per seat, seat 1 first.
    pub backends: Vec<Arc<dyn ChatBackend>>,
    pub prompts: Arc<PromptLibrary>,
    pub retry: RetryPolicy,
    pub log_dir: Option<PathBuf>,
    pub parallel: bool,
}

impl TournamentConfig {
    pub fn new(games: usize, seed: u64, backend: Arc<dyn ChatBackend>, prompts: Arc<PromptLibrary>) -> Self {
        TournamentConfig {
            games,
            seed,
            talk_turns: GameConfig::default().talk_turns_per_day,
            language: prompts.language.clone(),
            rotation: Rotation::LatinSquare,
            backends: vec![backend; PLAYER_COUNT],
            prompts,
            retry: RetryPolicy::default(),
            log_dir: None,
            parallel: true,
        }
    }

    pub fn game_config(&self, index: usize) -> GameConfig {
        GameConfig {
            talk_turns_per_day: self.talk_turns,
            rng_seed: game_seed(self.seed, index),
            language_pack: self.language.clone(),
        }
    }

    pub fn assignment(&self, index: usize) -> Assignment {
        match self.rotation {
            Rotation::LatinSquare => rotation_assignment(self.seed, index),
            Rotation::Random => assign_roles_for_seed(game_seed(self.seed, index)),
        }
    }
}

/// Plays one game with five in-process agents, each seeded from the game seed.
pub fn play_local_game(
    config: GameConfig,
    assignment: Option<Assignment>,
    backends: &[Arc<dyn ChatBackend>],
    prompts: &Arc<PromptLibrary>,
    retry: RetryPolicy,
) -> Result<GameLog, ServerError> {
    if backends.len() != PLAYER_COUNT {
        return Err(ServerError::SlotCount(backends.len()));
    }
    let mut slots: Vec<ConnectionSlot> = AgentId::all()
        .zip(backends)
        .map(|(id, backend)| {
            let settings =
                AgentSettings::new(backend.clone(), prompts.clone(), agent_seed(config.rng_seed, id)).with_retry(retry);
            ConnectionSlot::new(id, Box::new(LocalLink::new(Agent::new(settings))))
        })
        .collect();
    run_game(config, &mut slots, assignment, ServerOptions::default())
}

fn play_indexed(cfg: &TournamentConfig, index: usize) -> GameLog {
    let config = cfg.game_config(index);
    let assignment = cfg.assignment(index);
    let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        play_local_game(config.clone(), Some(assignment.clone()), &cfg.backends, &cfg.prompts, cfg.retry)
    }));
    let reason = match run {
        Ok(Ok(log)) => return log,
        Ok(Err(e)) => e.to_string(),
        Err(panic) => panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "game panicked".to_string()),
    };
    tracing::error!(game = index, %reason, "game aborted");
    let mut log = GameLog::start(&config, &assignment);
    log.push(LogEvent::Aborted { reason });
    log
}

/// Runs every game (concurrently when enabled) and persists the logs in index order.
pub fn run_tournament(cfg: &TournamentConfig) -> Result<Vec<GameLog>, HarnessError> {
    let logs: Vec<GameLog> = if cfg.parallel {
        (0..cfg.games).into_par_iter().map(|i| play_indexed(cfg, i)).collect()
    } else {
        (0..cfg.games).map(|i| play_indexed(cfg, i)).collect()
    };
    if let Some(dir) = &cfg.log_dir {
        std::fs::create_dir_all(dir).map_err(|source| LogError::Io { path: dir.display().to_string(), source })?;
        for (i, log) in logs.iter().enumerate() {
            log.write_to(&dir.join(log_file_name(i)))?;
        }
    }
    Ok(logs)
}

/// Reads every `*.ndjson` log in `dir`, sorted by file name.
pub fn load_logs(dir: &Path) -> Result<Vec<(PathBuf, GameLog)>, LogError> {
    let io = |source| LogError::Io { path: dir.display().to_string(), source };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    paths.sort();
    paths.into_iter().map(|p| GameLog::read_from(&p).map(|log| (p, log))).collect()
}
