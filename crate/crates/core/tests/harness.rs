use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use wolf_arena::agent::PromptLibrary;
use wolf_arena::backend::{ChatBackend, RetryPolicy, Script, ScriptedBackend};
use wolf_arena::game::{AgentId, GameOutcome, Role, Team, VoteRecord, WinReason};
use wolf_arena::harness::{
    compute_win_rates, parse_transcript, render_replay, replay, rotation_assignment, run_tournament, single_label,
    GameLog, LogEvent, RateCell, ReplayError, Rotation, TournamentConfig,
};
use wolf_arena::GameConfig;

fn selfplay_cfg(games: usize, seed: u64) -> TournamentConfig {
    let backend: Arc<dyn ChatBackend> = Arc::new(ScriptedBackend::new(Script::selfplay()));
    let prompts = Arc::new(PromptLibrary::builtin("en").unwrap());
    let mut cfg = TournamentConfig::new(games, seed, backend, prompts);
    cfg.retry = RetryPolicy::immediate();
    cfg
}

fn id(n: u8) -> AgentId {
    AgentId::new(n).unwrap()
}

#[test]
fn tournament_produces_one_outcome_per_game() {
    let logs = run_tournament(&selfplay_cfg(10, 1)).unwrap();
    assert_eq!(logs.len(), 10);
    for log in &logs {
        let outcomes = log.events().filter(|e| matches!(e, LogEvent::Outcome(_))).count();
        assert_eq!(outcomes, 1);
        assert!(!log.is_aborted());
    }
}

#[test]
fn tournaments_are_reproducible_and_thread_independent() {
    let a = run_tournament(&selfplay_cfg(12, 99)).unwrap();
    let mut seq = selfplay_cfg(12, 99);
    seq.parallel = false;
    let b = run_tournament(&seq).unwrap();
    assert_eq!(a, b);
    let c = run_tournament(&selfplay_cfg(12, 100)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn logs_persist_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = selfplay_cfg(3, 4);
    cfg.log_dir = Some(dir.path().to_path_buf());
    let logs = run_tournament(&cfg).unwrap();
    let loaded = wolf_arena::harness::load_logs(dir.path()).unwrap();
    assert_eq!(loaded.len(), 3);
    assert!(loaded[0].0.ends_with("game_0000.ndjson"));
    for ((_, got), want) in loaded.iter().zip(&logs) {
        assert_eq!(got, want);
    }
}

#[test]
fn rotation_over_forty_games_gives_each_seat_eight_werewolf_games() {
    let mut wolf = BTreeMap::new();
    for g in 0..40 {
        for (seat, role) in rotation_assignment(77, g) {
            if role == Role::Werewolf {
                *wolf.entry(seat).or_insert(0) += 1;
            }
        }
    }
    assert_eq!(wolf.values().copied().collect::<Vec<_>>(), vec![8; 5]);
}

proptest! {
    #[test]
    fn rotation_counts_differ_by_at_most_one(seed in any::<u64>(), games in 1usize..60) {
        let mut counts: BTreeMap<(Role, AgentId), usize> = BTreeMap::new();
        for g in 0..games {
            let a = rotation_assignment(seed, g);
            let mut deal: Vec<Role> = a.values().copied().collect();
            deal.sort();
            let mut want = vec![Role::Possessed, Role::Seer, Role::Villager, Role::Villager, Role::Werewolf];
            want.sort();
            prop_assert_eq!(deal, want);
            for (seat, role) in a {
                *counts.entry((role, seat)).or_default() += 1;
            }
        }
        for role in [Role::Possessed, Role::Seer, Role::Villager, Role::Werewolf] {
            let per_seat: Vec<usize> = AgentId::all().map(|s| counts.get(&(role, s)).copied().unwrap_or(0)).collect();
            let (lo, hi) = (per_seat.iter().min().unwrap(), per_seat.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "{:?}: {:?}", role, per_seat);
        }
    }
}

#[test]
fn random_rotation_uses_seeded_deals() {
    let mut cfg = selfplay_cfg(2, 5);
    cfg.rotation = Rotation::Random;
    let logs = run_tournament(&cfg).unwrap();
    assert_eq!(logs.len(), 2);
}

#[test]
fn every_log_replays_to_its_outcome() {
    for log in run_tournament(&selfplay_cfg(25, 2024)).unwrap() {
        let report = replay(&log).unwrap();
        assert_eq!(Some(report.outcome), log.outcome());
        // Each boundary's living set shrinks monotonically.
        for w in report.boundaries.windows(2) {
            assert!(w[1].1.is_subset(&w[0].1));
        }
    }
}

#[test]
fn transcripts_round_trip() {
    for log in run_tournament(&selfplay_cfg(15, 3)).unwrap() {
        let text = render_replay(&log).unwrap();
        let parsed = parse_transcript(&text).unwrap();
        assert_eq!(parsed, log);
        assert_eq!(render_replay(&parsed).unwrap(), text);
    }
}

#[test]
fn tampered_log_fails_replay_with_event_index() {
    let log = run_tournament(&selfplay_cfg(1, 8)).unwrap().remove(0);
    let text = log.to_ndjson();
    // Swap the first exile to a player who was not voted for most.
    let idx = log.events().position(|e| matches!(e, LogEvent::Exile { .. })).unwrap();
    let line = text.lines().nth(idx).unwrap().to_string();
    let exiled: serde_json::Value = serde_json::from_str(&line).unwrap();
    let who = exiled["agent"].as_u64().unwrap();
    let other = if who == 1 { 2 } else { 1 };
    let bad = text.replacen(&line, &line.replace(&format!("\"agent\":{who}"), &format!("\"agent\":{other}")), 1);
    let bad = GameLog::from_ndjson(&bad).unwrap();
    match replay(&bad) {
        Err(ReplayError::Event { index, .. }) => assert_eq!(index, idx),
        other => panic!("{other:?}"),
    }
}

#[test]
fn corrupt_header_is_reported() {
    let mut log = GameLog::default();
    log.push(LogEvent::Aborted { reason: "x".into() });
    assert!(render_replay(&log).is_err());
}

fn header(seed: u64) -> GameLog {
    let roles = [Role::Werewolf, Role::Seer, Role::Possessed, Role::Villager, Role::Villager];
    GameLog::start(&GameConfig::new(seed), &AgentId::all().zip(roles).collect())
}

#[test]
fn all_skip_turn_renders_five_skip_lines() {
    let mut log = header(1);
    log.push(LogEvent::phase(wolf_arena::Phase::Day0Greeting, AgentId::all()));
    for s in AgentId::all() {
        log.push(LogEvent::Talk(wolf_arena::game::TalkEntry { day: 0, turn: 0, speaker: s, text: "Skip".into() }));
    }
    let text = render_replay(&log).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with(": Skip")).count(), 5);
    assert_eq!(parse_transcript(&text).unwrap(), log);
}

#[test]
fn werewolf_exiled_transcript_ends_after_the_vote() {
    let mut log = header(1);
    log.push(LogEvent::phase(wolf_arena::Phase::NightVote { day: 1 }, AgentId::all()));
    for (v, t) in [(1, 2), (2, 1), (3, 1), (4, 1), (5, 1)] {
        log.push(LogEvent::Vote(VoteRecord { day: 1, voter: id(v), target: id(t) }));
    }
    log.push(LogEvent::Exile { day: 1, agent: id(1) });
    log.push(LogEvent::Outcome(GameOutcome { winner: Team::Human, reason: WinReason::WerewolfExiled }));
    let text = render_replay(&log).unwrap();
    let tail: Vec<&str> = text.lines().rev().take(5).collect();
    assert_eq!(
        tail,
        vec![
            "Winner: HUMAN team (werewolf exiled)",
            "== Game over ==",
            "",
            "Agent[01] is exiled",
            "Tally: Agent[01] 4, Agent[02] 1",
        ]
    );
}

/// Recount with no shared code: team from role by hand, rounding by long division.
fn naive_percent(wins: u64, games: u64) -> String {
    let scaled = wins * 10_000;
    let (mut q, r) = (scaled / games, scaled % games);
    if 2 * r >= games {
        q += 1;
    }
    format!("{}.{:02}%", q / 100, q % 100)
}

#[test]
fn published_ratios() {
    for (wins, games, want) in
        [(32, 58, "55.17%"), (25, 40, "62.50%"), (7, 11, "63.64%"), (7, 8, "87.50%"), (0, 40, "0.00%")]
    {
        assert_eq!(RateCell::new(wins, games).percent(), want);
        assert_eq!(naive_percent(wins, games), want);
    }
    assert_eq!(RateCell::new(0, 0).percent(), "-");
}

proptest! {
    #[test]
    fn percent_matches_long_division(games in 1u64..100_000, frac in 0.0f64..=1.0) {
        let wins = ((games as f64) * frac) as u64;
        prop_assert_eq!(RateCell::new(wins, games).percent(), naive_percent(wins, games));
    }
}

fn synthetic_log(assign: &[Role; 5], winner: Team, aborted: bool) -> GameLog {
    let mut log = GameLog::start(&GameConfig::new(0), &AgentId::all().zip(assign.iter().copied()).collect());
    if aborted {
        log.push(LogEvent::Aborted { reason: "test".into() });
    } else {
        log.push(LogEvent::Outcome(GameOutcome { winner, reason: WinReason::ParityReached }));
    }
    log
}

proptest! {
    #[test]
    fn win_rates_match_brute_force_recount(
        games in prop::collection::vec((Just(()).prop_perturb(|_, mut rng| {
            let mut deal = [Role::Possessed, Role::Seer, Role::Villager, Role::Villager, Role::Werewolf];
            for i in (1..5).rev() {
                let j = (rng.next_u32() as usize) % (i + 1);
                deal.swap(i, j);
            }
            deal
        }), any::<bool>(), prop::bool::weighted(0.1)), 0..40),
        split in any::<bool>(),
    ) {
        let logs: Vec<GameLog> = games
            .iter()
            .map(|(deal, wolves, aborted)| synthetic_log(deal, if *wolves { Team::Werewolf } else { Team::Human }, *aborted))
            .collect();
        let labels: BTreeMap<AgentId, String> = if split {
            AgentId::all().map(|s| (s, if s.index() <= 2 { "a".to_string() } else { "b".to_string() })).collect()
        } else {
            single_label("all")
        };
        let rows = compute_win_rates(&logs, &labels);

        let mut naive: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        for (deal, wolves, aborted) in &games {
            if *aborted {
                continue;
            }
            for (seat, role) in AgentId::all().zip(deal.iter()) {
                let wolf_side = matches!(role, Role::Werewolf | Role::Possessed);
                let won = wolf_side == *wolves;
                for key in [format!("{role:?}"), "total".to_string()] {
                    let cell = naive.entry(format!("{}/{key}", labels[&seat])).or_default();
                    cell.0 += u64::from(won);
                    cell.1 += 1;
                }
            }
        }
        for row in &rows {
            let total = naive.get(&format!("{}/total", row.team_label)).copied().unwrap_or_default();
            prop_assert_eq!((row.total.wins, row.total.games), total);
            let mut sum = (0, 0);
            for (role, cell) in &row.per_role {
                let want = naive.get(&format!("{}/{role:?}", row.team_label)).copied().unwrap_or_default();
                prop_assert_eq!((cell.wins, cell.games), want);
                sum.0 += cell.wins;
                sum.1 += cell.games;
            }
            prop_assert_eq!(sum, (row.total.wins, row.total.games));
        }
        let live = games.iter().filter(|g| !g.2).count();
        prop_assert_eq!(rows.is_empty(), live == 0);
    }
}
