//! Logs, replay, transcripts, self-play tournaments and win rates.

mod log;
mod rates;
mod replay;
mod tournament;
mod transcript;

use thiserror::Error;

pub use log::{FallbackReason, GameLog, LogError, LogEvent, LogLine};
pub use rates::{compute_win_rates, render_table, single_label, RateCell, WinRateRow};
pub use replay::{replay, ReplayError, ReplayReport};
pub use tournament::{
    load_logs, log_file_name, play_local_game, rotation_assignment, run_tournament, Rotation, TournamentConfig,
};
pub use transcript::{parse_transcript, render_replay, TranscriptError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Server(#[from] crate::server::ServerError),
}
