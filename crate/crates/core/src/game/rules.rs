use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::{AgentId, GameError, GameOutcome, Role, Species, Team, VoteRecord, WinReason};
use crate::seeded::{self, GameRng, Stream};

pub type Assignment = BTreeMap<AgentId, Role>;

/// Deals the fixed role multiset to seats 1..5 as a uniform permutation.
pub fn assign_roles(rng: &mut GameRng) -> Assignment {
    let mut deck = Role::DEAL;
    deck.shuffle(rng);
    AgentId::all().zip(deck).collect()
}

/// Role deal for a game seed.
pub fn assign_roles_for_seed(seed: u64) -> Assignment {
    assign_roles(&mut seeded::derive_rng(seed, Stream::Roles, &[]))
}

/// Checks that an assignment deals exactly the fixed role multiset to all five seats.
pub fn validate_assignment(assignment: &Assignment) -> Result<(), GameError> {
    let mut dealt: Vec<Role> = assignment.values().copied().collect();
    let mut expected = Role::DEAL.to_vec();
    dealt.sort();
    expected.sort();
    if assignment.len() != AgentId::all().count() || dealt != expected {
        return Err(GameError::InvalidConfig(format!("bad role assignment {assignment:?}")));
    }
    Ok(())
}

/// Random speaking order over the living players.
pub fn speaking_order(alive: &BTreeSet<AgentId>, rng: &mut GameRng) -> Vec<AgentId> {
    let mut order: Vec<AgentId> = alive.iter().copied().collect();
    order.shuffle(rng);
    order
}

pub fn divine(assignment: &Assignment, target: AgentId) -> Result<Species, GameError> {
    assignment.get(&target).map(|role| role.species()).ok_or(GameError::UnknownAgent(target.index()))
}

/// Result of counting one night's votes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub exiled: AgentId,
    pub counts: BTreeMap<AgentId, usize>,
    /// Candidates sharing the top count, ascending. More than one means a random tie-break.
    pub leaders: Vec<AgentId>,
}

impl Tally {
    pub fn was_tied(&self) -> bool {
        self.leaders.len() > 1
    }
}

pub fn vote_counts(votes: &[VoteRecord]) -> BTreeMap<AgentId, usize> {
    let mut counts = BTreeMap::new();
    for v in votes {
        *counts.entry(v.target).or_insert(0) += 1;
    }
    counts
}

/// Candidates with the highest vote count, ascending.
pub fn vote_leaders(votes: &[VoteRecord]) -> Vec<AgentId> {
    let counts = vote_counts(votes);
    let top = counts.values().copied().max().unwrap_or(0);
    counts.into_iter().filter(|&(_, c)| c == top).map(|(id, _)| id).collect()
}

/// Picks the exiled player: the unique plurality winner, or a uniform draw among the tied leaders.
pub fn tally_votes(votes: &[VoteRecord], rng: &mut GameRng) -> Result<Tally, GameError> {
    if votes.is_empty() {
        return Err(GameError::NoVotes);
    }
    let counts = vote_counts(votes);
    let leaders = vote_leaders(votes);
    let exiled =
        if leaders.len() == 1 { leaders[0] } else { seeded::choose(rng, &leaders).expect("leaders is non-empty") };
    Ok(Tally { exiled, counts, leaders })
}

/// Winner given the deal, the living set and everyone exiled so far.
///
/// Humans win as soon as the werewolf is exiled. The werewolf team wins once
/// living werewolves are at least as many as living human-species players
/// (the possessed counts as human here).
pub fn evaluate_winner(assignment: &Assignment, alive: &BTreeSet<AgentId>, exiled: &[AgentId]) -> Option<GameOutcome> {
    let wolf_exiled = exiled.iter().any(|id| assignment.get(id) == Some(&Role::Werewolf));
    if wolf_exiled {
        return Some(GameOutcome { winner: Team::Human, reason: WinReason::WerewolfExiled });
    }
    let wolves = alive.iter().filter(|id| assignment[id].species() == Species::Werewolf).count();
    let humans = alive.len() - wolves;
    if wolves >= humans {
        return Some(GameOutcome { winner: Team::Werewolf, reason: WinReason::ParityReached });
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(i: u8) -> AgentId {
        AgentId::new(i).unwrap()
    }

    fn vote(voter: u8, target: u8) -> VoteRecord {
        VoteRecord { day: 1, voter: id(voter), target: id(target) }
    }

    #[test]
    fn deal_is_fixed_multiset_and_deterministic() {
        for seed in 0..200 {
            let a = assign_roles_for_seed(seed);
            validate_assignment(&a).unwrap();
            assert_eq!(a, assign_roles_for_seed(seed));
        }
    }

    #[test]
    fn werewolf_seat_frequency_is_uniform() {
        // 10,000 seeds, each seat should hold the werewolf 2000 ± 200 times.
        let mut hits = [0usize; 5];
        for seed in 0..10_000u64 {
            let a = assign_roles_for_seed(seed);
            let wolf = a.iter().find(|(_, r)| **r == Role::Werewolf).unwrap().0;
            hits[wolf.index() as usize - 1] += 1;
        }
        for h in hits {
            assert!((1800..=2200).contains(&h), "{hits:?}");
        }
    }

    #[test]
    fn speaking_order_is_permutation() {
        let mut rng = seeded::derive_rng(3, Stream::SpeakingOrder, &[1, 1]);
        let alive: BTreeSet<AgentId> = [id(3)].into();
        assert_eq!(speaking_order(&alive, &mut rng), vec![id(3)]);
        let alive: BTreeSet<AgentId> = AgentId::all().collect();
        let mut order = speaking_order(&alive, &mut rng);
        order.sort();
        assert_eq!(order, alive.iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn speaking_order_replays_per_turn() {
        let alive: BTreeSet<AgentId> = AgentId::all().collect();
        let draw = |turn| speaking_order(&alive, &mut seeded::derive_rng(11, Stream::SpeakingOrder, &[1, turn]));
        assert_eq!(draw(2), draw(2));
        let distinct: BTreeSet<Vec<AgentId>> = (1..=10).map(draw).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn divination_reveals_species_only() {
        let a: Assignment = [(id(1), Role::Werewolf), (id(2), Role::Possessed), (id(3), Role::Villager)].into();
        assert_eq!(divine(&a, id(1)).unwrap(), Species::Werewolf);
        assert_eq!(divine(&a, id(2)).unwrap(), Species::Human);
        assert_eq!(divine(&a, id(3)).unwrap(), Species::Human);
        assert!(divine(&a, id(4)).is_err());
    }

    #[test]
    fn tally_unique_max() {
        let mut rng = seeded::derive_rng(0, Stream::TieBreak, &[1]);
        let t = tally_votes(&[vote(2, 1), vote(3, 1), vote(4, 1), vote(1, 3)], &mut rng).unwrap();
        assert_eq!(t.exiled, id(1));
        assert!(!t.was_tied());
        assert_eq!(tally_votes(&[vote(1, 2)], &mut rng).unwrap().exiled, id(2));
    }

    #[test]
    fn tally_tie_is_seeded() {
        let votes = [vote(1, 2), vote(2, 1)];
        let pick = |s| tally_votes(&votes, &mut seeded::derive_rng(s, Stream::TieBreak, &[1])).unwrap();
        let t = pick(5);
        assert!(t.was_tied());
        assert!([id(1), id(2)].contains(&t.exiled));
        assert_eq!(t, pick(5));
        let seen: BTreeSet<AgentId> = (0..50).map(|s| pick(s).exiled).collect();
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn tally_empty_is_error() {
        let mut rng = seeded::derive_rng(0, Stream::TieBreak, &[1]);
        assert!(matches!(tally_votes(&[], &mut rng), Err(GameError::NoVotes)));
    }

    #[test]
    fn winner_rules() {
        let a: Assignment = [
            (id(1), Role::Werewolf),
            (id(2), Role::Villager),
            (id(3), Role::Seer),
            (id(4), Role::Possessed),
            (id(5), Role::Villager),
        ]
        .into();
        let alive: BTreeSet<AgentId> = [id(2), id(3), id(4), id(5)].into();
        assert_eq!(
            evaluate_winner(&a, &alive, &[id(1)]),
            Some(GameOutcome { winner: Team::Human, reason: WinReason::WerewolfExiled })
        );
        let alive: BTreeSet<AgentId> = [id(1), id(2)].into();
        assert_eq!(
            evaluate_winner(&a, &alive, &[id(5)]),
            Some(GameOutcome { winner: Team::Werewolf, reason: WinReason::ParityReached })
        );
        let alive: BTreeSet<AgentId> = [id(1), id(2), id(3)].into();
        assert_eq!(evaluate_winner(&a, &alive, &[id(5)]), None);
        // wolf + possessed + villager: possessed counts as human, game goes on
        let alive: BTreeSet<AgentId> = [id(1), id(4), id(2)].into();
        assert_eq!(evaluate_winner(&a, &alive, &[id(5)]), None);
    }
}
