//! Game orchestration: drives the phase machine over five agent links,
//! enforces per-request deadlines and substitutes fallbacks for missing,
//! late or unusable answers.

mod link;

use std::net::TcpListener;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::game::{
    self, AgentId, Assignment, AttackRecord, DivineRecord, GameConfig, GameError, GameState, Phase, PhaseEvent, Role,
    TalkEntry, VoteRecord, PLAYER_COUNT, SKIP,
};
use crate::harness::{log_file_name, FallbackReason, GameLog, LogError, LogEvent};
use crate::protocol::{self, build_game_info_view, AgentResponse, Packet, RequestKind};
use crate::seeded::{self, derive_rng, Stream};

pub use link::{AgentLink, LinkError, LocalLink, TcpLink};

pub const DEFAULT_DEADLINE: Duration = Duration::from_millis(60_000);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("a game needs exactly {PLAYER_COUNT} agents, got {0}")]
    SlotCount(usize),
    #[error("two slots claim {0}")]
    DuplicateSlot(AgentId),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("network error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct ConnectionSlot {
    pub agent_id: AgentId,
    pub deadline: Duration,
    link: Box<dyn AgentLink>,
    connected: bool,
}

impl ConnectionSlot {
    pub fn new(agent_id: AgentId, link: Box<dyn AgentLink>) -> Self {
        ConnectionSlot { agent_id, deadline: DEFAULT_DEADLINE, link, connected: true }
    }

    pub fn with_deadline(mut self, deadline: Duration) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    fn exchange(&mut self, packet: &Packet) -> Result<Option<String>, FallbackReason> {
        if !self.connected {
            return Err(FallbackReason::Disconnected);
        }
        match self.link.exchange(packet, self.deadline) {
            Ok(reply) => Ok(reply),
            Err(LinkError::Timeout) => Err(FallbackReason::Timeout),
            Err(e) => {
                tracing::warn!(agent = %self.agent_id, error = %e, "agent disconnected");
                self.connected = false;
                Err(FallbackReason::Disconnected)
            }
        }
    }
}

/// Talk: a missing answer becomes `Skip`. Actions: a missing, malformed or
/// illegal answer becomes a uniform pick over the legal targets, drawn from a
/// stream keyed by (day, request, agent) so it does not disturb other draws.
#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackPolicy;

impl FallbackPolicy {
    pub fn talk(&self) -> String {
        SKIP.to_string()
    }

    pub fn action_target(
        &self,
        seed: u64,
        day: u32,
        kind: RequestKind,
        agent: AgentId,
        legal: &[AgentId],
    ) -> Option<AgentId> {
        let mut rng = derive_rng(seed, Stream::Fallback, &[day as u64, request_code(kind), agent.index() as u64]);
        seeded::choose(&mut rng, legal)
    }
}

fn request_code(kind: RequestKind) -> u64 {
    match kind {
        RequestKind::Initialize => 0,
        RequestKind::DailyInitialize => 1,
        RequestKind::Talk => 2,
        RequestKind::Vote => 3,
        RequestKind::Divine => 4,
        RequestKind::Attack => 5,
        RequestKind::Finish => 6,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ServerOptions {
    /// Ask all voters at once. Votes are still applied in agent-id order.
    pub parallel_votes: bool,
    pub policy: FallbackPolicy,
}

/// One game in progress. The runner owns the state; links only carry messages.
pub struct GameRunner<'a> {
    state: GameState,
    log: GameLog,
    slots: Vec<&'a mut ConnectionSlot>,
    options: ServerOptions,
}

impl<'a> GameRunner<'a> {
    pub fn new(
        config: GameConfig,
        slots: &'a mut [ConnectionSlot],
        assignment: Option<Assignment>,
        options: ServerOptions,
    ) -> Result<Self, ServerError> {
        config.validate()?;
        if slots.len() != PLAYER_COUNT {
            return Err(ServerError::SlotCount(slots.len()));
        }
        let mut slots: Vec<&mut ConnectionSlot> = slots.iter_mut().collect();
        slots.sort_by_key(|s| s.agent_id);
        for pair in slots.windows(2) {
            if pair[0].agent_id == pair[1].agent_id {
                return Err(ServerError::DuplicateSlot(pair[0].agent_id));
            }
        }
        let state = match assignment {
            Some(a) => GameState::new(config, a)?,
            None => GameState::deal(config)?,
        };
        let log = GameLog::start(state.config(), state.assignment());
        Ok(GameRunner { state, log, slots, options })
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn log(&self) -> &GameLog {
        &self.log
    }

    fn seed(&self) -> u64 {
        self.state.config().rng_seed
    }

    fn slot(&mut self, id: AgentId) -> &mut ConnectionSlot {
        let i = self.slots.iter().position(|s| s.agent_id == id).expect("one slot per agent");
        self.slots[i]
    }

    fn packet(&self, to: AgentId, request: RequestKind, turn: Option<u32>) -> Packet {
        Packet { request, game_info: build_game_info_view(&self.state, to), turn }
    }

    fn log_fallback(&mut self, agent: AgentId, request: RequestKind, reason: FallbackReason, chosen: Option<AgentId>) {
        tracing::warn!(%agent, %request, reason = reason.word(), "fallback");
        let day = self.state.phase().day();
        self.log.push(LogEvent::Fallback { day, agent, request, reason, chosen });
    }

    /// Sends `request` to each listed agent in id order; acknowledgements carry no game data.
    fn notify(&mut self, request: RequestKind, to: Vec<AgentId>) {
        for id in to {
            let packet = self.packet(id, request, None);
            if let Err(reason) = self.slot(id).exchange(&packet) {
                if request != RequestKind::Finish {
                    self.log_fallback(id, request, reason, None);
                }
            }
        }
    }

    /// Interprets an action answer, falling back when it is missing or unusable.
    fn resolve_action(
        &mut self,
        who: AgentId,
        kind: RequestKind,
        reply: Result<Option<String>, FallbackReason>,
        legal: &[AgentId],
    ) -> Result<AgentId, GameError> {
        let choice = reply.and_then(|line| {
            let line = line.ok_or(FallbackReason::Malformed)?;
            match protocol::decode_response(kind, &line) {
                Ok(AgentResponse::Target(t)) if legal.contains(&t) => Ok(t),
                Ok(AgentResponse::Target(_)) => Err(FallbackReason::Illegal),
                _ => Err(FallbackReason::Malformed),
            }
        });
        match choice {
            Ok(t) => Ok(t),
            Err(reason) => {
                let day = self.state.phase().day();
                let chosen = self
                    .options
                    .policy
                    .action_target(self.seed(), day, kind, who, legal)
                    .ok_or_else(|| GameError::InvalidEvent(format!("no legal {kind} target for {who}")))?;
                self.log_fallback(who, kind, reason, Some(chosen));
                Ok(chosen)
            }
        }
    }

    fn action(&mut self, who: AgentId, kind: RequestKind, legal: &[AgentId]) -> Result<AgentId, GameError> {
        let packet = self.packet(who, kind, None);
        let reply = self.slot(who).exchange(&packet);
        self.resolve_action(who, kind, reply, legal)
    }

    fn enter_phase(&mut self) {
        self.log.push(LogEvent::phase(self.state.phase(), self.state.alive().iter().copied()));
    }

    /// One talk turn: living agents speak one at a time in a fresh seeded
    /// order, each seeing everything said before it.
    pub fn run_talk_round(&mut self) -> Result<Vec<TalkEntry>, GameError> {
        let phase = self.state.phase();
        let (day, turn) = match phase {
            p if p.is_talk() => (p.day(), p.turn().unwrap_or(0)),
            p => return Err(GameError::PhaseMismatch { phase: p, event: "talk round" }),
        };
        let mut rng = derive_rng(self.seed(), Stream::SpeakingOrder, &[day as u64, turn as u64]);
        let order = game::speaking_order(self.state.alive(), &mut rng);
        let mut spoken = Vec::with_capacity(order.len());
        for speaker in order {
            let packet = self.packet(speaker, RequestKind::Talk, Some(turn));
            let text = match self.slot(speaker).exchange(&packet) {
                Ok(Some(line)) => match protocol::decode_response(RequestKind::Talk, &line) {
                    Ok(AgentResponse::Talk(t)) if !t.trim().is_empty() => t.trim().to_string(),
                    _ => SKIP.to_string(),
                },
                Ok(None) => SKIP.to_string(),
                Err(reason) => {
                    self.log_fallback(speaker, RequestKind::Talk, reason, None);
                    self.options.policy.talk()
                }
            };
            let entry = TalkEntry { day, turn, speaker, text };
            self.state.record_talk(entry.clone())?;
            self.log.push(LogEvent::Talk(entry.clone()));
            spoken.push(entry);
        }
        self.state.step(PhaseEvent::TalkTurnCompleted)?;
        Ok(spoken)
    }

    fn collect_vote_replies(&mut self, voters: &[AgentId]) -> Vec<Result<Option<String>, FallbackReason>> {
        let packets: Vec<Packet> = voters.iter().map(|&v| self.packet(v, RequestKind::Vote, None)).collect();
        let mut slots: Vec<&mut ConnectionSlot> =
            self.slots.iter_mut().filter(|s| voters.contains(&s.agent_id)).map(|s| &mut **s).collect();
        if !self.options.parallel_votes {
            return slots.iter_mut().zip(&packets).map(|(s, p)| s.exchange(p)).collect();
        }
        thread::scope(|scope| {
            let handles: Vec<_> =
                slots.iter_mut().zip(&packets).map(|(s, p)| scope.spawn(move || s.exchange(p))).collect();
            handles.into_iter().map(|h| h.join().unwrap_or(Err(FallbackReason::Disconnected))).collect()
        })
    }

    fn run_vote(&mut self, day: u32) -> Result<(), GameError> {
        let voters: Vec<AgentId> = self.state.alive().iter().copied().collect();
        let replies = self.collect_vote_replies(&voters);
        let mut votes = Vec::with_capacity(voters.len());
        for (voter, reply) in voters.iter().copied().zip(replies) {
            let legal: Vec<AgentId> = voters.iter().copied().filter(|&v| v != voter).collect();
            let target = self.resolve_action(voter, RequestKind::Vote, reply, &legal)?;
            let vote = VoteRecord { day, voter, target };
            self.log.push(LogEvent::Vote(vote));
            votes.push(vote);
        }
        let mut rng = derive_rng(self.seed(), Stream::TieBreak, &[day as u64]);
        let tally = game::tally_votes(&votes, &mut rng)?;
        if tally.was_tied() {
            self.log.push(LogEvent::TieBreak { day, leaders: tally.leaders.clone(), chosen: tally.exiled });
        }
        self.log.push(LogEvent::Exile { day, agent: tally.exiled });
        self.state.step(PhaseEvent::VoteCompleted { votes, exiled: tally.exiled })
    }

    fn run_attack(&mut self, day: u32) -> Result<(), GameError> {
        let wolf = self.state.holder_of(Role::Werewolf);
        let legal: Vec<AgentId> = self.state.alive().iter().copied().filter(|&a| a != wolf).collect();
        let victim = self.action(wolf, RequestKind::Attack, &legal)?;
        let record = AttackRecord { day, attacker: wolf, victim };
        self.log.push(LogEvent::Attack(record));
        self.state.step(PhaseEvent::AttackCompleted(record))
    }

    fn run_divination(&mut self, day: u32) -> Result<(), GameError> {
        let seer = self.state.holder_of(Role::Seer);
        let legal: Vec<AgentId> = self.state.alive().iter().copied().filter(|&a| a != seer).collect();
        let target = self.action(seer, RequestKind::Divine, &legal)?;
        let result = game::divine(self.state.assignment(), target)?;
        let record = DivineRecord { day, seer, target, result };
        self.log.push(LogEvent::Divine(record));
        self.state.step(PhaseEvent::DivinationCompleted(record))
    }

    /// Vote, then (if nobody has won) attack, then (if the seer lives) divination.
    pub fn run_night(&mut self) -> Result<(), GameError> {
        loop {
            match self.state.phase() {
                Phase::NightVote { day } => {
                    self.enter_phase();
                    self.run_vote(day)?
                }
                Phase::NightAttack { day } => {
                    self.enter_phase();
                    self.run_attack(day)?
                }
                Phase::Night0Divine => {
                    self.enter_phase();
                    self.run_divination(0)?
                }
                Phase::NightDivine { day } => {
                    self.enter_phase();
                    self.run_divination(day)?
                }
                _ => return Ok(()),
            }
        }
    }

    fn drive(&mut self) -> Result<(), GameError> {
        let everyone: Vec<AgentId> = AgentId::all().collect();
        self.notify(RequestKind::Initialize, everyone);
        loop {
            match self.state.phase() {
                Phase::DayTalk { turn: 1, .. } => {
                    let alive = self.state.alive().iter().copied().collect();
                    self.notify(RequestKind::DailyInitialize, alive);
                    self.enter_phase();
                    self.run_talk_round()?;
                }
                p if p.is_talk() => {
                    self.enter_phase();
                    self.run_talk_round()?;
                }
                Phase::Finished => return Ok(()),
                _ => self.run_night()?,
            }
        }
    }

    /// Plays to the end. Engine errors end the game with an `aborted` event.
    pub fn run(mut self) -> GameLog {
        match self.drive() {
            Ok(()) => {
                let outcome = self.state.outcome().expect("finished games have an outcome");
                self.log.push(LogEvent::Outcome(outcome));
            }
            Err(e) => {
                tracing::error!(error = %e, "game aborted");
                self.log.push(LogEvent::Aborted { reason: e.to_string() });
            }
        }
        self.notify(RequestKind::Finish, AgentId::all().collect());
        self.log
    }
}

/// Plays one game over the given slots. `assignment` overrides the seeded deal.
pub fn run_game(
    config: GameConfig,
    slots: &mut [ConnectionSlot],
    assignment: Option<Assignment>,
    options: ServerOptions,
) -> Result<GameLog, ServerError> {
    Ok(GameRunner::new(config, slots, assignment, options)?.run())
}

/// Accepts five agents; seats are numbered in connection order.
pub fn accept_slots(listener: &TcpListener, deadline: Duration) -> Result<Vec<ConnectionSlot>, ServerError> {
    let mut slots = Vec::with_capacity(PLAYER_COUNT);
    for id in AgentId::all() {
        let (stream, peer) = listener.accept()?;
        tracing::info!(%id, %peer, "agent connected");
        slots.push(ConnectionSlot::new(id, Box::new(TcpLink::new(stream)?)).with_deadline(deadline));
    }
    Ok(slots)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub game: GameConfig,
    pub games: usize,
    pub deadline: Duration,
    pub log_dir: Option<PathBuf>,
}

/// Accepts five agents, then plays `games` games over the same connections.
/// With more than one game, each game's seed is derived from the base seed.
pub fn serve(listener: &TcpListener, cfg: &ServeConfig) -> Result<Vec<GameLog>, ServerError> {
    let mut slots = accept_slots(listener, cfg.deadline)?;
    if let Some(dir) = &cfg.log_dir {
        std::fs::create_dir_all(dir)?;
    }
    let options = ServerOptions { parallel_votes: true, ..Default::default() };
    let mut logs = Vec::with_capacity(cfg.games);
    for index in 0..cfg.games {
        let mut game = cfg.game.clone();
        if cfg.games > 1 {
            game.rng_seed = seeded::game_seed(cfg.game.rng_seed, index);
        }
        let log = run_game(game, &mut slots, None, options)?;
        if let Some(dir) = &cfg.log_dir {
            log.write_to(&dir.join(log_file_name(index)))?;
        }
        logs.push(log);
    }
    Ok(logs)
}
