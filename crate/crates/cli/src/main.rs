use std::io::{BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use wolf_arena::agent::{Agent, AgentSettings, PromptLibrary};
use wolf_arena::backend::{ApiBackend, ApiConfig, ChatBackend, RetryPolicy, Script, ScriptedBackend};
use wolf_arena::harness::{
    compute_win_rates, load_logs, play_local_game, render_replay, render_table, replay, run_tournament, single_label,
    GameLog, Rotation, TournamentConfig,
};
use wolf_arena::server::{serve, ServeConfig};
use wolf_arena::GameConfig;

#[derive(Parser)]
#[command(name = "wolf-arena", version, about = "Five-player Werewolf arena for LLM agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Host games for five agents connecting over TCP.
    Serve(ServeArgs),
    /// Connect one agent to a server.
    Agent(AgentArgs),
    /// Play one in-process self-play game and print its transcript.
    Play(PlayArgs),
    /// Play many in-process games and print win rates.
    Tournament(TournamentArgs),
    /// Win-rate table from a directory of game logs.
    Rates(RatesArgs),
    /// Check a game log by re-simulating it, then print its transcript.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct BackendArgs {
    /// `scripted` (built-in self-play script), `scripted:FILE` or `api`.
    #[arg(long, default_value = "scripted")]
    backend: String,
    #[arg(long, default_value_t = ApiConfig::default().url)]
    api_url: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value_t = ApiConfig::default().api_key_env)]
    api_key_env: String,
    #[arg(long, default_value_t = ApiConfig::default().model)]
    model: String,
    /// Prompt language pack.
    #[arg(long, default_value = "en")]
    lang: String,
    /// Load prompts from this directory instead of the built-in pack.
    #[arg(long)]
    prompts: Option<PathBuf>,
}

impl BackendArgs {
    fn build(&self) -> Result<(Arc<dyn ChatBackend>, RetryPolicy)> {
        match self.backend.split_once(':') {
            None if self.backend == "scripted" => {
                Ok((Arc::new(ScriptedBackend::unrecorded(Script::selfplay())), RetryPolicy::immediate()))
            }
            Some(("scripted", file)) => {
                let script = Script::load(file.as_ref()).with_context(|| format!("loading script {file}"))?;
                Ok((Arc::new(ScriptedBackend::unrecorded(script)), RetryPolicy::immediate()))
            }
            None if self.backend == "api" => {
                let config = ApiConfig {
                    url: self.api_url.clone(),
                    api_key_env: self.api_key_env.clone(),
                    model: self.model.clone(),
                    ..Default::default()
                };
                Ok((Arc::new(ApiBackend::new(config)?), RetryPolicy::default()))
            }
            _ => bail!("unknown backend {:?}; expected scripted, scripted:FILE or api", self.backend),
        }
    }

    fn prompts(&self) -> Result<Arc<PromptLibrary>> {
        let lib = match &self.prompts {
            Some(dir) => PromptLibrary::load_dir(&self.lang, dir)?,
            None => PromptLibrary::builtin(&self.lang)?,
        };
        Ok(Arc::new(lib))
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    port: u16,
    #[arg(long, default_value_t = 5)]
    talk_turns: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-request deadline.
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Games to play over the same five connections.
    #[arg(long, default_value_t = 1)]
    games: usize,
}

#[derive(Args)]
struct AgentArgs {
    /// Server address, HOST:PORT.
    #[arg(long)]
    connect: String,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlayArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    talk_turns: u32,
    #[command(flatten)]
    backend: BackendArgs,
    /// Also write the game log here.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct TournamentArgs {
    #[arg(long)]
    games: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    talk_turns: u32,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Deal roles independently per game instead of rotating them across seats.
    #[arg(long)]
    no_rotation: bool,
    /// Run games one after another.
    #[arg(long)]
    sequential: bool,
    /// Row label in the win-rate table.
    #[arg(long, default_value = "self-play")]
    label: String,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long, default_value = "self-play")]
    label: String,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    log: PathBuf,
}

fn game_config(seed: u64, talk_turns: u32, lang: &str) -> GameConfig {
    GameConfig { talk_turns_per_day: talk_turns, rng_seed: seed, language_pack: lang.to_string() }
}

fn report_aborted(logs: &[GameLog]) -> Result<()> {
    let aborted: Vec<String> =
        logs.iter().enumerate().filter_map(|(i, l)| l.abort_reason().map(|r| format!("game {i}: {r}"))).collect();
    if !aborted.is_empty() {
        bail!("{} game(s) aborted:\n{}", aborted.len(), aborted.join("\n"));
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let listener =
        TcpListener::bind((a.host.as_str(), a.port)).with_context(|| format!("binding {}:{}", a.host, a.port))?;
    eprintln!("listening on {}", listener.local_addr()?);
    let cfg = ServeConfig {
        game: game_config(a.seed, a.talk_turns, "en"),
        games: a.games,
        deadline: Duration::from_millis(a.timeout_ms),
        log_dir: a.log_dir,
    };
    let logs = serve(&listener, &cfg)?;
    for (i, log) in logs.iter().enumerate() {
        match log.outcome() {
            Some(o) => println!("game {i}: {} team wins ({:?})", o.winner, o.reason),
            None => println!("game {i}: aborted"),
        }
    }
    report_aborted(&logs)
}

fn cmd_agent(a: AgentArgs) -> Result<()> {
    let (backend, retry) = a.backend.build()?;
    let settings = AgentSettings::new(backend, a.backend.prompts()?, a.seed).with_retry(retry);
    let stream = TcpStream::connect(&a.connect).with_context(|| format!("connecting to {}", a.connect))?;
    let reader = BufReader::new(stream.try_clone()?);
    let handled = Agent::new(settings).serve_lines(reader, stream)?;
    tracing::info!(handled, "server closed the connection");
    Ok(())
}

fn cmd_play(a: PlayArgs) -> Result<()> {
    let (backend, retry) = a.backend.build()?;
    let prompts = a.backend.prompts()?;
    let config = game_config(a.seed, a.talk_turns, &prompts.language);
    let backends = vec![backend; 5];
    let log = play_local_game(config, None, &backends, &prompts, retry)?;
    if let Some(path) = &a.log {
        log.write_to(path)?;
    }
    let mut out = std::io::stdout().lock();
    out.write_all(render_replay(&log)?.as_bytes())?;
    report_aborted(std::slice::from_ref(&log))
}

fn cmd_tournament(a: TournamentArgs) -> Result<()> {
    let (backend, retry) = a.backend.build()?;
    let mut cfg = TournamentConfig::new(a.games, a.seed, backend, a.backend.prompts()?);
    cfg.talk_turns = a.talk_turns;
    cfg.retry = retry;
    cfg.log_dir = a.log_dir;
    cfg.parallel = !a.sequential;
    if a.no_rotation {
        cfg.rotation = Rotation::Random;
    }
    let logs = run_tournament(&cfg)?;
    print!("{}", render_table(&compute_win_rates(&logs, &single_label(&a.label))));
    report_aborted(&logs)
}

fn cmd_rates(a: RatesArgs) -> Result<()> {
    let logs: Vec<GameLog> = load_logs(&a.logs)?.into_iter().map(|(_, l)| l).collect();
    if logs.is_empty() {
        bail!("no .ndjson logs in {}", a.logs.display());
    }
    let skipped = logs.iter().filter(|l| l.is_aborted()).count();
    if skipped > 0 {
        eprintln!("warning: {skipped} aborted game(s) excluded");
    }
    print!("{}", render_table(&compute_win_rates(&logs, &single_label(&a.label))));
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> Result<()> {
    let log = GameLog::read_from(&a.log)?;
    let transcript = render_replay(&log)?;
    print!("{transcript}");
    replay(&log).with_context(|| format!("{} does not replay", a.log.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("error")))
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::Serve(a) => cmd_serve(a),
        Command::Agent(a) => cmd_agent(a),
        Command::Play(a) => cmd_play(a),
        Command::Tournament(a) => cmd_tournament(a),
        Command::Rates(a) => cmd_rates(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
