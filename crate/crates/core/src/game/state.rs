use std::collections::BTreeSet;

use super::rules::{self, Assignment};
use super::{
    AgentId, AttackRecord, DivineRecord, GameConfig, GameError, GameOutcome, Phase, Role, TalkEntry, VoteRecord,
    LAST_DAY,
};

/// Completion of the current phase, carrying whatever the phase decided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhaseEvent {
    /// Every living player spoke once in the current talk turn.
    TalkTurnCompleted,
    VoteCompleted {
        votes: Vec<VoteRecord>,
        exiled: AgentId,
    },
    AttackCompleted(AttackRecord),
    DivinationCompleted(DivineRecord),
}

impl PhaseEvent {
    fn name(&self) -> &'static str {
        match self {
            PhaseEvent::TalkTurnCompleted => "talk-turn-completed",
            PhaseEvent::VoteCompleted { .. } => "vote-completed",
            PhaseEvent::AttackCompleted(_) => "attack-completed",
            PhaseEvent::DivinationCompleted(_) => "divination-completed",
        }
    }
}

/// Authoritative state of one game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameState {
    config: GameConfig,
    assignment: Assignment,
    alive: BTreeSet<AgentId>,
    phase: Phase,
    talk_history: Vec<TalkEntry>,
    vote_history: Vec<Vec<VoteRecord>>,
    divine_history: Vec<DivineRecord>,
    attack_history: Vec<AttackRecord>,
    exile_history: Vec<(u32, AgentId)>,
    outcome: Option<GameOutcome>,
}

impl GameState {
    pub fn new(config: GameConfig, assignment: Assignment) -> Result<Self, GameError> {
        config.validate()?;
        rules::validate_assignment(&assignment)?;
        Ok(GameState {
            config,
            alive: assignment.keys().copied().collect(),
            assignment,
            phase: Phase::Day0Greeting,
            talk_history: Vec::new(),
            vote_history: Vec::new(),
            divine_history: Vec::new(),
            attack_history: Vec::new(),
            exile_history: Vec::new(),
            outcome: None,
        })
    }

    /// New game with roles dealt from the config's seed.
    pub fn deal(config: GameConfig) -> Result<Self, GameError> {
        let assignment = rules::assign_roles_for_seed(config.rng_seed);
        GameState::new(config, assignment)
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn role_of(&self, id: AgentId) -> Role {
        self.assignment[&id]
    }

    pub fn holder_of(&self, role: Role) -> AgentId {
        *self.assignment.iter().find(|(_, r)| **r == role).expect("every role is dealt").0
    }

    pub fn alive(&self) -> &BTreeSet<AgentId> {
        &self.alive
    }

    pub fn is_alive(&self, id: AgentId) -> bool {
        self.alive.contains(&id)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn talk_history(&self) -> &[TalkEntry] {
        &self.talk_history
    }

    /// Votes cast on the night of `day` (1-based).
    pub fn votes_on(&self, day: u32) -> &[VoteRecord] {
        day.checked_sub(1).and_then(|i| self.vote_history.get(i as usize)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vote_history(&self) -> &[Vec<VoteRecord>] {
        &self.vote_history
    }

    pub fn divine_history(&self) -> &[DivineRecord] {
        &self.divine_history
    }

    pub fn attack_history(&self) -> &[AttackRecord] {
        &self.attack_history
    }

    pub fn exile_history(&self) -> &[(u32, AgentId)] {
        &self.exile_history
    }

    pub fn outcome(&self) -> Option<GameOutcome> {
        self.outcome
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    pub fn check_winner(&self) -> Option<GameOutcome> {
        let exiled: Vec<AgentId> = self.exile_history.iter().map(|&(_, id)| id).collect();
        rules::evaluate_winner(&self.assignment, &self.alive, &exiled)
    }

    /// Speakers who already talked in the current talk turn.
    pub fn spoken_this_turn(&self) -> BTreeSet<AgentId> {
        match (self.phase.is_talk(), self.phase.turn()) {
            (true, Some(turn)) => {
                let day = self.phase.day();
                self.talk_history
                    .iter()
                    .rev()
                    .take_while(|t| t.day == day && t.turn == turn)
                    .map(|t| t.speaker)
                    .collect()
            }
            _ => BTreeSet::new(),
        }
    }

    /// Appends one utterance of the current talk turn.
    pub fn record_talk(&mut self, entry: TalkEntry) -> Result<(), GameError> {
        let (day, turn) = match self.phase {
            p if p.is_talk() => (p.day(), p.turn().unwrap_or(0)),
            p => return Err(GameError::PhaseMismatch { phase: p, event: "talk" }),
        };
        if entry.day != day || entry.turn != turn {
            return Err(GameError::InvalidEvent(format!(
                "talk for day {} turn {} during day {day} turn {turn}",
                entry.day, entry.turn
            )));
        }
        if !self.is_alive(entry.speaker) {
            return Err(GameError::InvalidEvent(format!("{} is dead and cannot talk", entry.speaker)));
        }
        if self.spoken_this_turn().contains(&entry.speaker) {
            return Err(GameError::InvalidEvent(format!("{} already spoke this turn", entry.speaker)));
        }
        self.talk_history.push(entry);
        Ok(())
    }

    /// Applies the completion of the current phase and moves to the next one.
    pub fn step(&mut self, event: PhaseEvent) -> Result<(), GameError> {
        let mismatch = |phase, event: &PhaseEvent| GameError::PhaseMismatch { phase, event: event.name() };
        match (self.phase, &event) {
            (Phase::Day0Greeting, PhaseEvent::TalkTurnCompleted) => {
                self.require_turn_complete()?;
                self.phase = Phase::Night0Divine;
            }
            (Phase::DayTalk { day, turn }, PhaseEvent::TalkTurnCompleted) => {
                self.require_turn_complete()?;
                self.phase = if turn < self.config.talk_turns_per_day {
                    Phase::DayTalk { day, turn: turn + 1 }
                } else {
                    Phase::NightVote { day }
                };
            }
            (Phase::Night0Divine, PhaseEvent::DivinationCompleted(record)) => {
                self.apply_divination(0, record)?;
                self.phase = Phase::DayTalk { day: 1, turn: 1 };
            }
            (Phase::NightDivine { day }, PhaseEvent::DivinationCompleted(record)) => {
                self.apply_divination(day, record)?;
                self.phase = Phase::DayTalk { day: day + 1, turn: 1 };
            }
            (Phase::NightVote { day }, PhaseEvent::VoteCompleted { votes, exiled }) => {
                self.apply_votes(day, votes, *exiled)?;
                if !self.finish_if_won() {
                    self.phase = Phase::NightAttack { day };
                }
            }
            (Phase::NightAttack { day }, PhaseEvent::AttackCompleted(record)) => {
                self.apply_attack(day, record)?;
                if !self.finish_if_won() {
                    if day >= LAST_DAY {
                        return Err(GameError::Unresolved);
                    }
                    let seer = self.holder_of(Role::Seer);
                    self.phase = if self.is_alive(seer) {
                        Phase::NightDivine { day }
                    } else {
                        Phase::DayTalk { day: day + 1, turn: 1 }
                    };
                }
            }
            (phase, event) => return Err(mismatch(phase, event)),
        }
        Ok(())
    }

    fn finish_if_won(&mut self) -> bool {
        match self.check_winner() {
            Some(outcome) => {
                self.outcome = Some(outcome);
                self.phase = Phase::Finished;
                true
            }
            None => false,
        }
    }

    fn require_turn_complete(&self) -> Result<(), GameError> {
        let spoken = self.spoken_this_turn();
        if spoken != self.alive {
            return Err(GameError::InvalidEvent(format!(
                "talk turn incomplete: {} of {} living players spoke",
                spoken.len(),
                self.alive.len()
            )));
        }
        Ok(())
    }

    fn apply_divination(&mut self, day: u32, record: &DivineRecord) -> Result<(), GameError> {
        let seer = self.holder_of(Role::Seer);
        if record.day != day || record.seer != seer || !self.is_alive(seer) {
            return Err(GameError::InvalidEvent(format!("bad divination record {record:?}")));
        }
        if record.target == seer || !self.assignment.contains_key(&record.target) {
            return Err(GameError::InvalidEvent(format!("illegal divination target {}", record.target)));
        }
        if record.result != rules::divine(&self.assignment, record.target)? {
            return Err(GameError::InvalidEvent(format!("divination result does not match role of {}", record.target)));
        }
        self.divine_history.push(*record);
        Ok(())
    }

    fn apply_votes(&mut self, day: u32, votes: &[VoteRecord], exiled: AgentId) -> Result<(), GameError> {
        let mut voters = BTreeSet::new();
        for v in votes {
            if v.day != day || v.voter == v.target || !self.is_alive(v.voter) || !self.is_alive(v.target) {
                return Err(GameError::InvalidEvent(format!("illegal vote {v:?}")));
            }
            if !voters.insert(v.voter) {
                return Err(GameError::InvalidEvent(format!("{} voted twice", v.voter)));
            }
        }
        if voters != self.alive {
            return Err(GameError::InvalidEvent("not every living player voted".to_string()));
        }
        if !rules::vote_leaders(votes).contains(&exiled) {
            return Err(GameError::InvalidEvent(format!("{exiled} does not hold the most votes")));
        }
        self.vote_history.push(votes.to_vec());
        self.alive.remove(&exiled);
        self.exile_history.push((day, exiled));
        Ok(())
    }

    fn apply_attack(&mut self, day: u32, record: &AttackRecord) -> Result<(), GameError> {
        let wolf = self.holder_of(Role::Werewolf);
        if record.day != day || record.attacker != wolf || !self.is_alive(wolf) {
            return Err(GameError::InvalidEvent(format!("bad attack record {record:?}")));
        }
        if record.victim == wolf || !self.is_alive(record.victim) {
            return Err(GameError::InvalidEvent(format!("illegal attack victim {}", record.victim)));
        }
        self.attack_history.push(*record);
        self.alive.remove(&record.victim);
        Ok(())
    }
}
