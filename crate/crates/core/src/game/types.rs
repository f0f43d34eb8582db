use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GameError;

pub const PLAYER_COUNT: usize = 5;
pub const LAST_DAY: u32 = 2;
pub const MIN_TALK_TURNS: u32 = 5;

/// Seat number of a player, 1 through 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AgentId(u8);

impl AgentId {
    pub fn new(index: u8) -> Result<Self, GameError> {
        if (1..=PLAYER_COUNT as u8).contains(&index) {
            Ok(AgentId(index))
        } else {
            Err(GameError::UnknownAgent(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// All five seats in ascending order.
    pub fn all() -> impl Iterator<Item = AgentId> {
        (1..=PLAYER_COUNT as u8).map(AgentId)
    }
}

impl TryFrom<u8> for AgentId {
    type Error = GameError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        AgentId::new(value)
    }
}

impl From<AgentId> for u8 {
    fn from(id: AgentId) -> u8 {
        id.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Agent[{:02}]", self.0)
    }
}

impl FromStr for AgentId {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix("Agent[")
            .and_then(|rest| rest.strip_suffix(']'))
            .filter(|d| d.len() == 2)
            .ok_or_else(|| GameError::BadAgentName(s.to_string()))?;
        let index: u8 = digits.parse().map_err(|_| GameError::BadAgentName(s.to_string()))?;
        AgentId::new(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Villager,
    Seer,
    Possessed,
    Werewolf,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Possessed, Role::Seer, Role::Villager, Role::Werewolf];

    /// Role multiset dealt in every game.
    pub const DEAL: [Role; PLAYER_COUNT] =
        [Role::Villager, Role::Villager, Role::Seer, Role::Possessed, Role::Werewolf];

    pub fn team(self) -> Team {
        match self {
            Role::Villager | Role::Seer => Team::Human,
            Role::Possessed | Role::Werewolf => Team::Werewolf,
        }
    }

    pub fn species(self) -> Species {
        match self {
            Role::Werewolf => Species::Werewolf,
            _ => Species::Human,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Villager => "VILLAGER",
            Role::Seer => "SEER",
            Role::Possessed => "POSSESSED",
            Role::Werewolf => "WEREWOLF",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "VILLAGER" => Ok(Role::Villager),
            "SEER" => Ok(Role::Seer),
            "POSSESSED" => Ok(Role::Possessed),
            "WEREWOLF" => Ok(Role::Werewolf),
            _ => Err(GameError::BadName(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Team {
    Human,
    Werewolf,
}

impl fmt::Display for Team {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Team::Human => "HUMAN",
            Team::Werewolf => "WEREWOLF",
        })
    }
}

/// What a divination reveals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Species {
    Human,
    Werewolf,
}

impl Species {
    /// Lower-case word used in prose ("human", "werewolf").
    pub fn word(self) -> &'static str {
        match self {
            Species::Human => "human",
            Species::Werewolf => "werewolf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Day0Greeting,
    Night0Divine,
    DayTalk { day: u32, turn: u32 },
    NightVote { day: u32 },
    NightAttack { day: u32 },
    NightDivine { day: u32 },
    Finished,
}

impl Phase {
    pub fn day(self) -> u32 {
        match self {
            Phase::Day0Greeting | Phase::Night0Divine => 0,
            Phase::DayTalk { day, .. }
            | Phase::NightVote { day }
            | Phase::NightAttack { day }
            | Phase::NightDivine { day } => day,
            Phase::Finished => LAST_DAY,
        }
    }

    /// Talk turn of a talking phase; the greeting is turn 0.
    pub fn turn(self) -> Option<u32> {
        match self {
            Phase::Day0Greeting => Some(0),
            Phase::DayTalk { turn, .. } => Some(turn),
            _ => None,
        }
    }

    pub fn is_talk(self) -> bool {
        self.turn().is_some()
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Day0Greeting => "DAY0_GREETING",
            Phase::Night0Divine => "NIGHT0_DIVINE",
            Phase::DayTalk { .. } => "DAY_TALK",
            Phase::NightVote { .. } => "NIGHT_VOTE",
            Phase::NightAttack { .. } => "NIGHT_ATTACK",
            Phase::NightDivine { .. } => "NIGHT_DIVINE",
            Phase::Finished => "FINISHED",
        }
    }

    /// Inverse of [`Phase::name`] together with the day/turn coordinates.
    pub fn from_parts(name: &str, day: u32, turn: Option<u32>) -> Result<Phase, GameError> {
        let phase = match name {
            "DAY0_GREETING" => Phase::Day0Greeting,
            "NIGHT0_DIVINE" => Phase::Night0Divine,
            "DAY_TALK" => Phase::DayTalk { day, turn: turn.ok_or_else(|| GameError::BadName(name.to_string()))? },
            "NIGHT_VOTE" => Phase::NightVote { day },
            "NIGHT_ATTACK" => Phase::NightAttack { day },
            "NIGHT_DIVINE" => Phase::NightDivine { day },
            "FINISHED" => Phase::Finished,
            _ => return Err(GameError::BadName(name.to_string())),
        };
        Ok(phase)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub talk_turns_per_day: u32,
    pub rng_seed: u64,
    pub language_pack: String,
}

impl GameConfig {
    pub fn new(rng_seed: u64) -> Self {
        GameConfig { rng_seed, ..Default::default() }
    }

    pub fn with_talk_turns(mut self, turns: u32) -> Self {
        self.talk_turns_per_day = turns;
        self
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.talk_turns_per_day < MIN_TALK_TURNS {
            return Err(GameError::InvalidConfig(format!(
                "talk_turns_per_day must be at least {MIN_TALK_TURNS}, got {}",
                self.talk_turns_per_day
            )));
        }
        Ok(())
    }
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig { talk_turns_per_day: MIN_TALK_TURNS, rng_seed: 0, language_pack: "en".to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TalkEntry {
    pub day: u32,
    pub turn: u32,
    #[serde(rename = "agent")]
    pub speaker: AgentId,
    pub text: String,
}

/// Literal text of a passed talk turn.
pub const SKIP: &str = "Skip";

impl TalkEntry {
    pub fn is_skip(&self) -> bool {
        self.text == SKIP
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub day: u32,
    pub voter: AgentId,
    pub target: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivineRecord {
    pub day: u32,
    pub seer: AgentId,
    pub target: AgentId,
    pub result: Species,
}

impl DivineRecord {
    /// First-person sentence the seer (or a fake seer) states in prompts.
    pub fn sentence(&self) -> String {
        format!(
            "On the night of Day {}, I divined {}, and the result was {}.",
            self.day,
            self.target,
            self.result.word()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub day: u32,
    pub attacker: AgentId,
    pub victim: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WinReason {
    WerewolfExiled,
    ParityReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub winner: Team,
    pub reason: WinReason,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_names_round_trip() {
        for id in AgentId::all() {
            assert_eq!(id.to_string().parse::<AgentId>().unwrap(), id);
        }
        assert_eq!(AgentId::new(3).unwrap().to_string(), "Agent[03]");
        assert!("Agent[06]".parse::<AgentId>().is_err());
        assert!("Agent[3]".parse::<AgentId>().is_err());
        assert!(AgentId::new(0).is_err());
    }

    #[test]
    fn teams_and_species() {
        assert_eq!(Role::Possessed.team(), Team::Werewolf);
        assert_eq!(Role::Possessed.species(), Species::Human);
        assert_eq!(Role::Seer.team(), Team::Human);
        assert_eq!(Role::Werewolf.species(), Species::Werewolf);
    }

    #[test]
    fn divination_sentence() {
        let rec = DivineRecord {
            day: 0,
            seer: AgentId::new(2).unwrap(),
            target: AgentId::new(1).unwrap(),
            result: Species::Human,
        };
        assert_eq!(rec.sentence(), "On the night of Day 0, I divined Agent[01], and the result was human.");
    }

    #[test]
    fn config_requires_five_turns() {
        assert!(GameConfig::new(1).with_talk_turns(4).validate().is_err());
        assert!(GameConfig::new(1).validate().is_ok());
    }
}
