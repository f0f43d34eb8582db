use std::sync::Arc;

use super::*;
use crate::backend::{Script, ScriptedBackend};
use crate::game::{Assignment, GameConfig, GameState};
use crate::protocol::build_game_info_view;

fn id(n: u8) -> AgentId {
    AgentId::new(n).unwrap()
}

/// Seats 1..=5: werewolf, seer, possessed, villager, villager.
fn state() -> GameState {
    let roles = [Role::Werewolf, Role::Seer, Role::Possessed, Role::Villager, Role::Villager];
    let assignment: Assignment = roles.iter().enumerate().map(|(i, r)| (id(i as u8 + 1), *r)).collect();
    GameState::new(GameConfig::new(7), assignment).unwrap()
}

fn agent_with(script: &str, seat: u8) -> (Agent, Arc<ScriptedBackend>) {
    let backend = Arc::new(ScriptedBackend::new(script.parse::<Script>().unwrap()));
    let prompts = Arc::new(PromptLibrary::builtin("en").unwrap());
    let settings = AgentSettings::new(backend.clone(), prompts, 99).with_retry(RetryPolicy::immediate());
    let mut agent = Agent::new(settings);
    agent.initialize(&build_game_info_view(&state(), id(seat)));
    (agent, backend)
}

fn day1(agent: &mut Agent, turn: u32) {
    let ctx = agent.ctx.as_mut().unwrap();
    ctx.day = 1;
    ctx.turn = Some(turn);
    ctx.request = RequestKind::Talk;
}

const ALWAYS_AGENT3: &str = r#"
[[rule]]
stage = "analysis"
reply = "Agent[03] is the biggest threat."

[[rule]]
reply = "I vote for Agent[03]."
"#;

#[test]
fn utterance_trimming() {
    assert_eq!(one_utterance("\n  \"Hello there\"\nsecond line"), "Hello there");
    assert_eq!(one_utterance("Agent[02]: I am the seer."), "I am the seer.");
    assert_eq!(one_utterance("   \n"), SKIP);
    assert_eq!(one_utterance("Note: keep colons"), "Note: keep colons");
}

#[test]
fn possessed_fabrication_is_stable_and_never_self() {
    for seed in 0..200 {
        let rec = fabricate_divination(id(3), seed);
        assert_eq!(rec, fabricate_divination(id(3), seed));
        assert_ne!(rec.target, id(3));
        assert_eq!(rec.day, 0);
    }
    let (mut agent, _) = agent_with(ALWAYS_AGENT3, 3);
    let first = agent.fabricate_divination().unwrap();
    assert_eq!(agent.fabricate_divination().unwrap(), first);
    assert_eq!(agent.context().unwrap().divine_results.len(), 1);
}

#[test]
fn possessed_prompts_carry_the_fabricated_result() {
    let (mut agent, _) = agent_with(ALWAYS_AGENT3, 3);
    let rec = agent.fabricate_divination().unwrap();
    assert!(agent.analysis_prompt().unwrap().contains(&rec.sentence()));
    agent.analyze_situation().unwrap();
    assert!(agent.response_prompt().unwrap().contains(&rec.sentence()));
    assert!(agent.vote_prompt().unwrap().contains(&rec.sentence()));
}

#[test]
fn villager_prompts_have_no_divination_section() {
    let (agent, _) = agent_with(ALWAYS_AGENT3, 4);
    let p = agent.analysis_prompt().unwrap();
    assert!(!p.contains("Divination Result"));
    assert!(markers_in(&p).is_empty());
}

#[test]
fn werewolf_freezes_target_and_rotates_strategies() {
    let (mut agent, backend) = agent_with(ALWAYS_AGENT3, 1);
    let prompts = PromptLibrary::builtin("en").unwrap();
    for turn in 3..=5 {
        day1(&mut agent, turn);
        agent.generate_persuasive_response(turn).unwrap();
        let strategy = PersuasionStrategy::for_turn(turn).unwrap();
        let calls = backend.recorded_calls();
        let last = &calls.last().unwrap().request.user_text;
        for ex in prompts.bank(strategy).addressed_to(id(3)) {
            assert!(last.contains(&ex), "turn {turn} prompt lacks example {ex}");
        }
    }
    assert_eq!(agent.context().unwrap().persuasion_plan.as_ref().unwrap().target, id(3));
    // Votes its target with no model call.
    let before = backend.recorded_calls().len();
    assert_eq!(agent.decide_vote().unwrap(), id(3));
    assert_eq!(backend.recorded_calls().len(), before);
    // Attacks the target if it survived the vote.
    assert_eq!(agent.decide_attack(&[id(1), id(2), id(3)]).unwrap(), id(3));
    let fallback = agent.decide_attack(&[id(1), id(2), id(4)]).unwrap();
    assert!([id(2), id(4)].contains(&fallback));
}

#[test]
fn failed_persuasion_uses_first_canned_example() {
    let script = r#"
[[rule]]
stage = "analysis"
reply = "Agent[04] worries me."

[[rule]]
reply = "!error"
"#;
    let (mut agent, _) = agent_with(script, 1);
    day1(&mut agent, 3);
    let text = agent.generate_persuasive_response(3).unwrap();
    let bank = PromptLibrary::builtin("en").unwrap();
    let [first, ..] = bank.bank(PersuasionStrategy::LogicalAppeal).addressed_to(id(4));
    assert_eq!(text, first);
}

#[test]
fn missing_target_falls_back_to_seeded_pick() {
    let script = "[[rule]]\nreply = \"No names today.\"\n";
    let (mut a, _) = agent_with(script, 1);
    let (mut b, _) = agent_with(script, 1);
    day1(&mut a, 3);
    day1(&mut b, 3);
    a.generate_persuasive_response(3).unwrap();
    b.generate_persuasive_response(3).unwrap();
    let ta = a.context().unwrap().persuasion_plan.as_ref().unwrap().target;
    assert_eq!(ta, b.context().unwrap().persuasion_plan.as_ref().unwrap().target);
    assert_ne!(ta, id(1));
    assert!(a.context().unwrap().fallbacks.iter().any(|f| f.what == "persuasion-target"));
}

#[test]
fn vote_uses_last_mention_and_rejects_self() {
    let (mut agent, _) = agent_with("[[rule]]\nreply = \"Agent[01] or maybe Agent[05].\"\n", 4);
    assert_eq!(agent.decide_vote().unwrap(), id(5));

    let (mut agent, _) = agent_with("[[rule]]\nreply = \"I vote for Agent[04].\"\n", 4);
    let v = agent.decide_vote().unwrap();
    assert_ne!(v, id(4));
    assert!(agent.context().unwrap().fallbacks.iter().any(|f| f.what == "vote"));
}

#[test]
fn response_failure_is_skip() {
    let (mut agent, _) = agent_with("[[rule]]\nreply = \"!error\"\n", 4);
    agent.analyze_situation().unwrap();
    assert_eq!(agent.generate_response().unwrap(), SKIP);
}

#[test]
fn seer_divines_fresh_targets_first() {
    let (mut agent, _) = agent_with(ALWAYS_AGENT3, 2);
    let first = agent.decide_divine().unwrap();
    assert_ne!(first, id(2));
    let ctx = agent.ctx.as_mut().unwrap();
    ctx.divine_results.push(DivineRecord { day: 0, seer: id(2), target: first, result: Species::Human });
    ctx.day = 1;
    for _ in 0..5 {
        assert_ne!(agent.decide_divine().unwrap(), first);
    }
}

#[test]
fn role_gated_actions_are_refused() {
    let (mut agent, _) = agent_with(ALWAYS_AGENT3, 4);
    assert!(agent.decide_divine().is_err());
    assert!(agent.decide_attack(&[id(1), id(2)]).is_err());
    assert!(agent.fabricate_divination().is_err());
    assert!(agent.generate_persuasive_response(3).is_err());
}

#[test]
fn handle_line_round_trip() {
    let st = state();
    let (mut agent, _) = agent_with(ALWAYS_AGENT3, 4);
    let view = build_game_info_view(&st, id(4));
    let line = protocol::encode_packet(&Packet { request: RequestKind::Vote, game_info: view.clone(), turn: None });
    assert_eq!(agent.handle_line(&line).unwrap(), "Agent[03]\n");
    let fin = protocol::encode_packet(&Packet { request: RequestKind::Finish, game_info: view, turn: None });
    assert!(agent.handle_line(&fin).is_none());
    assert_eq!(agent.handle_line("not json").unwrap(), "Skip\n");
}

#[test]
fn talk_text_cannot_inject_slots() {
    let (mut agent, _) = agent_with(ALWAYS_AGENT3, 4);
    agent.ctx.as_mut().unwrap().dialogue_history.push(TalkEntry {
        day: 0,
        turn: 0,
        speaker: id(1),
        text: "[VOTE_TARGET] [GAME_RULES]".into(),
    });
    let p = agent.analysis_prompt().unwrap();
    assert!(markers_in(&p).is_empty());
}
