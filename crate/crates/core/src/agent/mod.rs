//! The LLM agent.
//!
//! Each talk turn starts with a situation analysis: the model reads the task,
//! the rules and the dialogue so far (plus a divination result for the seer,
//! or a fabricated one for the possessed) and writes an assessment. That
//! assessment is then fed into a role-specific response prompt. On talk turns
//! 3, 4 and 5 of each day the werewolf instead argues for a vote against the
//! player its analysis named most threatening, using logical, credibility and
//! emotional appeals in that order, and later votes and attacks that same
//! player.

pub mod prompts;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::backend::{
    complete_with_retry, BackendError, CallContext, CallStage, ChatBackend, ChatRequest, RetryPolicy,
    DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE,
};
use crate::game::{AgentId, DivineRecord, Role, Species, TalkEntry, SKIP};
use crate::protocol::{self, AgentResponse, GameInfoView, Packet, ProtocolError, RequestKind, Status};
use crate::seeded::{self, Stream};

pub use prompts::{
    defuse_markers, markers_in, Bindings, ExampleBank, PersuasionStrategy, PromptLibrary, PromptTemplate, Slot,
    TemplateError, TemplateId,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent has not been initialized")]
    NotInitialized,
    #[error("protocol violation: {0}")]
    Violation(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SituationAnalysis {
    pub text: String,
    pub vote_target: Option<AgentId>,
    /// (day, turn); turn is `None` for the analysis before a vote.
    pub produced_at: (u32, Option<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersuasionPlan {
    pub day: u32,
    pub target: AgentId,
    pub schedule: BTreeMap<u32, PersuasionStrategy>,
}

impl PersuasionPlan {
    pub fn new(day: u32, target: AgentId) -> Self {
        let schedule = (3..=5).filter_map(|t| PersuasionStrategy::for_turn(t).map(|s| (t, s))).collect();
        PersuasionPlan { day, target, schedule }
    }
}

/// A decision the agent made without a usable model answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FallbackNote {
    pub day: u32,
    pub what: &'static str,
}

/// One agent's private memory for one game.
#[derive(Debug, Clone)]
pub struct AgentContext {
    pub self_id: AgentId,
    pub role: Role,
    pub seed: u64,
    pub day: u32,
    pub statuses: BTreeMap<AgentId, Status>,
    pub dialogue_history: Vec<TalkEntry>,
    /// Real results for the seer, the single fabricated one for the possessed.
    pub divine_results: Vec<DivineRecord>,
    pub latest_analysis: Option<SituationAnalysis>,
    pub persuasion_plan: Option<PersuasionPlan>,
    pub fallbacks: Vec<FallbackNote>,
    request: RequestKind,
    turn: Option<u32>,
}

/// The possessed's fake night-0 result: uniform target among the other four, uniform species.
pub fn fabricate_divination(self_id: AgentId, seed: u64) -> DivineRecord {
    use rand::Rng;
    let mut rng = seeded::derive_rng(seed, Stream::Fabricate, &[]);
    let others: Vec<AgentId> = AgentId::all().filter(|&id| id != self_id).collect();
    let target = seeded::choose(&mut rng, &others).expect("four other seats");
    let result = if rng.gen_bool(0.5) { Species::Werewolf } else { Species::Human };
    DivineRecord { day: 0, seer: self_id, target, result }
}

impl AgentContext {
    pub fn new(view: &GameInfoView, seed: u64) -> Self {
        let mut ctx = AgentContext {
            self_id: view.self_id,
            role: view.self_role,
            seed,
            day: view.day,
            statuses: BTreeMap::new(),
            dialogue_history: Vec::new(),
            divine_results: Vec::new(),
            latest_analysis: None,
            persuasion_plan: None,
            fallbacks: Vec::new(),
            request: RequestKind::Initialize,
            turn: None,
        };
        if ctx.role == Role::Possessed {
            ctx.divine_results.push(fabricate_divination(ctx.self_id, seed));
        }
        ctx.update(view);
        ctx
    }

    pub fn update(&mut self, view: &GameInfoView) {
        if view.day != self.day {
            self.persuasion_plan = None;
        }
        self.day = view.day;
        self.statuses = view.status_map.clone();
        self.dialogue_history = view.talk_list.clone();
        if self.role == Role::Seer {
            self.divine_results = view.my_divine_results.clone();
        }
    }

    pub fn alive(&self) -> Vec<AgentId> {
        self.statuses.iter().filter(|(_, s)| **s == Status::Alive).map(|(id, _)| *id).collect()
    }

    /// Living players other than this agent, ascending.
    pub fn alive_others(&self) -> Vec<AgentId> {
        self.alive().into_iter().filter(|&id| id != self.self_id).collect()
    }

    fn is_candidate(&self, id: AgentId) -> bool {
        id != self.self_id && self.statuses.get(&id) == Some(&Status::Alive)
    }

    fn note_fallback(&mut self, what: &'static str) {
        tracing::warn!(agent = %self.self_id, day = self.day, what, "agent fallback");
        self.fallbacks.push(FallbackNote { day: self.day, what });
    }

    fn divination_text(&self) -> String {
        if self.divine_results.is_empty() {
            "You have not divined anyone yet.".to_string()
        } else {
            self.divine_results.iter().map(DivineRecord::sentence).collect::<Vec<_>>().join("\n")
        }
    }

    fn has_divination_slot(&self) -> bool {
        matches!(self.role, Role::Seer | Role::Possessed)
    }

    fn history_text(&self) -> String {
        let names = |status: Status| {
            let ids: Vec<String> =
                self.statuses.iter().filter(|(_, s)| **s == status).map(|(id, _)| id.to_string()).collect();
            if ids.is_empty() {
                "none".to_string()
            } else {
                ids.join(", ")
            }
        };
        let mut out = format!(
            "It is Day {}. Alive: {}. Exiled: {}. Attacked: {}.",
            self.day,
            names(Status::Alive),
            names(Status::Exiled),
            names(Status::Attacked)
        );
        if self.dialogue_history.is_empty() {
            out.push_str("\n(no talk yet)");
        }
        for t in &self.dialogue_history {
            out.push_str(&format!("\nDay {} turn {} {}: {}", t.day, t.turn, t.speaker, defuse_markers(&t.text)));
        }
        out
    }

    fn own_statements(&self) -> String {
        let mine: Vec<String> = self
            .dialogue_history
            .iter()
            .filter(|t| t.speaker == self.self_id && t.day == self.day && !t.is_skip())
            .map(|t| format!("Turn {}: {}", t.turn, defuse_markers(&t.text)))
            .collect();
        if mine.is_empty() {
            "(none)".to_string()
        } else {
            mine.join("\n")
        }
    }
}

/// Reduces a completion to one spoken line; empty means a pass.
pub fn one_utterance(text: &str) -> String {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let line = match line.split_once(':') {
        Some((label, rest)) if label.trim().parse::<AgentId>().is_ok() => rest.trim(),
        _ => line,
    };
    let line = line.trim_matches('"').trim();
    if line.is_empty() {
        SKIP.to_string()
    } else {
        line.to_string()
    }
}

#[derive(Clone)]
pub struct AgentSettings {
    pub backend: Arc<dyn ChatBackend>,
    pub prompts: Arc<PromptLibrary>,
    pub retry: RetryPolicy,
    pub temperature: f32,
    pub max_tokens: u32,
    pub seed: u64,
}

impl AgentSettings {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: Arc<PromptLibrary>, seed: u64) -> Self {
        AgentSettings {
            backend,
            prompts,
            retry: RetryPolicy::default(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

pub struct Agent {
    settings: AgentSettings,
    ctx: Option<AgentContext>,
}

impl Agent {
    pub fn new(settings: AgentSettings) -> Self {
        Agent { settings, ctx: None }
    }

    pub fn context(&self) -> Option<&AgentContext> {
        self.ctx.as_ref()
    }

    fn ctx(&self) -> Result<&AgentContext, AgentError> {
        self.ctx.as_ref().ok_or(AgentError::NotInitialized)
    }

    fn ctx_mut(&mut self) -> Result<&mut AgentContext, AgentError> {
        self.ctx.as_mut().ok_or(AgentError::NotInitialized)
    }

    /// Starts a new game from the receiver's view.
    pub fn initialize(&mut self, view: &GameInfoView) {
        self.ctx = Some(AgentContext::new(view, self.settings.seed));
    }

    /// Answers one wire line. `None` when the request expects no reply.
    pub fn handle_line(&mut self, line: &str) -> Option<String> {
        let packet = match protocol::decode_packet(line) {
            Ok(p) => p,
            Err(e) => {
                tracing::warn!(error = %e, "undecodable packet");
                return Some(format!("{SKIP}\n"));
            }
        };
        let reply = match self.handle_request(&packet) {
            Ok(resp) => protocol::encode_response(&resp),
            Err(e) => {
                tracing::warn!(error = %e, request = %packet.request, "request failed");
                format!("{SKIP}\n")
            }
        };
        packet.request.expects_reply().then_some(reply)
    }

    /// Answers requests line by line until the reader closes. Returns the number of requests handled.
    pub fn serve_lines<R: BufRead, W: Write>(&mut self, reader: R, mut writer: W) -> std::io::Result<usize> {
        let mut handled = 0;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            handled += 1;
            if let Some(reply) = self.handle_line(&line) {
                writer.write_all(reply.as_bytes())?;
                writer.flush()?;
            }
        }
        Ok(handled)
    }

    pub fn handle_request(&mut self, packet: &Packet) -> Result<AgentResponse, AgentError> {
        let view = &packet.game_info;
        if packet.request == RequestKind::Initialize || self.ctx.is_none() {
            self.initialize(view);
        }
        let ctx = self.ctx_mut()?;
        if view.self_id != ctx.self_id || view.self_role != ctx.role {
            return Err(AgentError::Violation(format!("packet addressed to {} sent to {}", view.self_id, ctx.self_id)));
        }
        ctx.update(view);
        ctx.request = packet.request;
        ctx.turn = packet.turn;
        let role = ctx.role;
        match packet.request {
            RequestKind::Initialize | RequestKind::DailyInitialize | RequestKind::Finish => Ok(AgentResponse::Ack),
            RequestKind::Talk => {
                let turn = packet.turn.ok_or_else(|| AgentError::Violation("talk request without turn".into()))?;
                let day = view.day;
                if role == Role::Werewolf && day >= 1 && PersuasionStrategy::for_turn(turn).is_some() {
                    self.generate_persuasive_response(turn).map(AgentResponse::Talk)
                } else {
                    self.analyze_situation()?;
                    self.generate_response().map(AgentResponse::Talk)
                }
            }
            RequestKind::Vote => self.decide_vote().map(AgentResponse::Target),
            RequestKind::Divine if role == Role::Seer => self.decide_divine().map(AgentResponse::Target),
            RequestKind::Attack if role == Role::Werewolf => {
                let alive = view.alive();
                self.decide_attack(&alive).map(AgentResponse::Target)
            }
            kind => Err(AgentError::Violation(format!("{kind} request sent to a {role}"))),
        }
    }

    fn complete(&self, stage: CallStage, prompt: String) -> Result<String, BackendError> {
        let ctx = self.ctx.as_ref().expect("callers hold a context");
        let request = ChatRequest {
            system_text: format!("You are {}, a player in a five-player Werewolf game.", ctx.self_id),
            user_text: prompt,
            temperature: self.settings.temperature,
            max_tokens: self.settings.max_tokens,
            context: Some(CallContext {
                agent: ctx.self_id,
                role: ctx.role,
                request: ctx.request,
                stage,
                day: ctx.day,
                turn: ctx.turn,
                candidates: ctx.alive_others(),
            }),
        };
        complete_with_retry(self.settings.backend.as_ref(), &request, self.settings.retry).map(|r| r.text)
    }

    fn base_bindings(&self, ctx: &AgentContext, extra_task: Option<&str>) -> Bindings {
        let prompts = &self.settings.prompts;
        let mut task = format!("You are {}. {}", ctx.self_id, prompts.task(ctx.role));
        if let Some(extra) = extra_task {
            task.push('\n');
            task.push_str(extra);
        }
        let mut b = Bindings::new();
        b.insert(Slot::TaskDescription, task);
        b.insert(Slot::GameRules, prompts.rules().to_string());
        b.insert(Slot::DialogueHistory, ctx.history_text());
        if ctx.has_divination_slot() {
            b.insert(Slot::DivinationResult, ctx.divination_text());
        }
        b
    }

    fn analysis_text(ctx: &AgentContext) -> String {
        ctx.latest_analysis
            .as_ref()
            .map(|a| defuse_markers(&a.text))
            .filter(|t| !t.trim().is_empty())
            .unwrap_or_else(|| "No analysis is available.".to_string())
    }

    /// Prompt for the situation analysis.
    pub fn analysis_prompt(&self) -> Result<String, AgentError> {
        let ctx = self.ctx()?;
        let instruction = (ctx.role == Role::Werewolf).then(|| self.settings.prompts.target_instruction());
        let id = if ctx.has_divination_slot() { TemplateId::AnalysisDivination } else { TemplateId::Analysis };
        Ok(self.settings.prompts.template(id).render(&self.base_bindings(ctx, instruction))?)
    }

    /// Runs the situation analysis and stores it. On backend failure the previous
    /// analysis is kept; with none, an empty analysis without a target is stored.
    pub fn analyze_situation(&mut self) -> Result<&SituationAnalysis, AgentError> {
        let prompt = self.analysis_prompt()?;
        let reply = self.complete(CallStage::Analysis, prompt);
        let ctx = self.ctx_mut()?;
        let produced_at = (ctx.day, ctx.turn);
        let analysis = match reply {
            Ok(text) => {
                let vote_target = protocol::last_agent_mention(&text).filter(|&id| ctx.is_candidate(id));
                SituationAnalysis { text: text.trim().to_string(), vote_target, produced_at }
            }
            Err(e) => {
                tracing::warn!(agent = %ctx.self_id, error = %e, "analysis failed");
                ctx.note_fallback("analysis");
                match ctx.latest_analysis.take() {
                    Some(mut prev) => {
                        prev.vote_target = prev.vote_target.filter(|&id| ctx.is_candidate(id));
                        prev
                    }
                    None => SituationAnalysis { text: String::new(), vote_target: None, produced_at },
                }
            }
        };
        Ok(ctx.latest_analysis.insert(analysis))
    }

    /// The possessed's fabricated result, created once and reused all game.
    pub fn fabricate_divination(&mut self) -> Result<DivineRecord, AgentError> {
        let ctx = self.ctx_mut()?;
        if ctx.role != Role::Possessed {
            return Err(AgentError::Violation(format!("{} cannot fabricate divinations", ctx.role)));
        }
        if ctx.divine_results.is_empty() {
            ctx.divine_results.push(fabricate_divination(ctx.self_id, ctx.seed));
        }
        Ok(ctx.divine_results[0])
    }

    pub fn response_prompt(&self) -> Result<String, AgentError> {
        let ctx = self.ctx()?;
        let id = if ctx.has_divination_slot() { TemplateId::ResponseDivination } else { TemplateId::Response };
        let mut b = self.base_bindings(ctx, None);
        b.insert(Slot::ConditionAnalysis, Self::analysis_text(ctx));
        Ok(self.settings.prompts.template(id).render(&b)?)
    }

    /// Role-specific utterance conditioned on the latest analysis. Backend failure yields `Skip`.
    pub fn generate_response(&mut self) -> Result<String, AgentError> {
        let prompt = self.response_prompt()?;
        match self.complete(CallStage::Response, prompt) {
            Ok(text) => Ok(one_utterance(&text)),
            Err(e) => {
                tracing::warn!(error = %e, "response generation failed");
                self.ctx_mut()?.note_fallback("response");
                Ok(SKIP.to_string())
            }
        }
    }

    /// Freezes today's persuasion target, analysing first when no plan exists yet.
    fn ensure_plan(&mut self) -> Result<AgentId, AgentError> {
        let ctx = self.ctx()?;
        if let Some(plan) = ctx.persuasion_plan.as_ref().filter(|p| p.day == ctx.day) {
            return Ok(plan.target);
        }
        let target = self.analyze_situation()?.vote_target;
        let ctx = self.ctx_mut()?;
        let target = match target {
            Some(t) => t,
            None => {
                ctx.note_fallback("persuasion-target");
                let mut rng = seeded::derive_rng(ctx.seed, Stream::PersuasionTarget, &[ctx.day as u64]);
                seeded::choose(&mut rng, &ctx.alive_others())
                    .ok_or_else(|| AgentError::Violation("no one left to persuade against".into()))?
            }
        };
        ctx.persuasion_plan = Some(PersuasionPlan::new(ctx.day, target));
        Ok(target)
    }

    pub fn persuasion_prompt(&self, strategy: PersuasionStrategy, target: AgentId) -> Result<String, AgentError> {
        let ctx = self.ctx()?;
        let mut b = self.base_bindings(ctx, None);
        b.insert(Slot::ConditionAnalysis, Self::analysis_text(ctx));
        b.insert(Slot::VoteTarget, target.to_string());
        b.insert(Slot::PersuasionExamples, self.settings.prompts.bank(strategy).prompt_section(target));
        Ok(self.settings.prompts.template(TemplateId::Persuasion).render(&b)?)
    }

    /// Werewolf talk on turns 3..=5. The target is chosen by the turn-3 analysis and
    /// frozen for the day; later turns still refresh the analysis text.
    pub fn generate_persuasive_response(&mut self, turn: u32) -> Result<String, AgentError> {
        let ctx = self.ctx()?;
        if ctx.role != Role::Werewolf {
            return Err(AgentError::Violation(format!("{} does not run persuasion", ctx.role)));
        }
        let strategy = PersuasionStrategy::for_turn(turn)
            .ok_or_else(|| AgentError::Violation(format!("no persuasion strategy for turn {turn}")))?;
        let had_plan = ctx.persuasion_plan.as_ref().is_some_and(|p| p.day == ctx.day);
        let target = self.ensure_plan()?;
        if had_plan {
            self.analyze_situation()?;
        }
        let prompt = self.persuasion_prompt(strategy, target)?;
        match self.complete(CallStage::Persuasion, prompt) {
            Ok(text) => Ok(one_utterance(&text)),
            Err(e) => {
                tracing::warn!(error = %e, "persuasion failed, using canned example");
                self.ctx_mut()?.note_fallback("persuasion");
                let [first, ..] = self.settings.prompts.bank(strategy).addressed_to(target);
                Ok(first)
            }
        }
    }

    pub fn vote_prompt(&self) -> Result<String, AgentError> {
        let ctx = self.ctx()?;
        let survivors: Vec<String> = ctx.alive_others().iter().map(ToString::to_string).collect();
        let extra = format!("The players you can vote for are: {}.", survivors.join(", "));
        let id = if ctx.has_divination_slot() { TemplateId::VoteDivination } else { TemplateId::Vote };
        let mut b = self.base_bindings(ctx, Some(&extra));
        b.insert(Slot::ConditionAnalysis, Self::analysis_text(ctx));
        b.insert(Slot::OwnStatements, ctx.own_statements());
        Ok(self.settings.prompts.template(id).render(&b)?)
    }

    fn random_vote(&mut self) -> Result<AgentId, AgentError> {
        let ctx = self.ctx_mut()?;
        ctx.note_fallback("vote");
        let mut rng = seeded::derive_rng(ctx.seed, Stream::VoteFallback, &[ctx.day as u64]);
        seeded::choose(&mut rng, &ctx.alive_others()).ok_or_else(|| AgentError::Violation("no vote candidates".into()))
    }

    /// Werewolf: today's persuasion target, no model call. Others: fresh analysis,
    /// then a step-by-step voting prompt whose last named player is the vote.
    pub fn decide_vote(&mut self) -> Result<AgentId, AgentError> {
        let ctx = self.ctx()?;
        if ctx.role == Role::Werewolf {
            let planned = ctx
                .persuasion_plan
                .as_ref()
                .filter(|p| p.day == ctx.day)
                .map(|p| p.target)
                .or_else(|| ctx.latest_analysis.as_ref().and_then(|a| a.vote_target))
                .filter(|&id| ctx.is_candidate(id));
            return match planned {
                Some(t) => Ok(t),
                None => self.random_vote(),
            };
        }
        self.analyze_situation()?;
        let prompt = self.vote_prompt()?;
        let choice = match self.complete(CallStage::Vote, prompt) {
            Ok(text) => protocol::last_agent_mention(&text),
            Err(e) => {
                tracing::warn!(error = %e, "vote generation failed");
                None
            }
        };
        match choice.filter(|&id| self.ctx.as_ref().is_some_and(|c| c.is_candidate(id))) {
            Some(t) => Ok(t),
            None => self.random_vote(),
        }
    }

    /// Attack today's persuasion target if it survived the vote, otherwise a seeded
    /// uniform pick among the other survivors.
    pub fn decide_attack(&mut self, alive_after_vote: &[AgentId]) -> Result<AgentId, AgentError> {
        let ctx = self.ctx_mut()?;
        if ctx.role != Role::Werewolf {
            return Err(AgentError::Violation(format!("{} cannot attack", ctx.role)));
        }
        let me = ctx.self_id;
        let planned = ctx.persuasion_plan.as_ref().filter(|p| p.day == ctx.day).map(|p| p.target);
        if let Some(target) = planned.filter(|t| *t != me && alive_after_vote.contains(t)) {
            return Ok(target);
        }
        let candidates = attack_candidates(me, alive_after_vote);
        let mut rng = seeded::derive_rng(ctx.seed, Stream::Attack, &[ctx.day as u64]);
        seeded::choose(&mut rng, &candidates).ok_or_else(|| AgentError::Violation("nobody left to attack".into()))
    }

    /// Uniform over living players not yet divined; everyone living once all were divined.
    pub fn decide_divine(&mut self) -> Result<AgentId, AgentError> {
        let ctx = self.ctx()?;
        if ctx.role != Role::Seer {
            return Err(AgentError::Violation(format!("{} cannot divine", ctx.role)));
        }
        let others = ctx.alive_others();
        let fresh: Vec<AgentId> =
            others.iter().copied().filter(|id| ctx.divine_results.iter().all(|d| d.target != *id)).collect();
        let pool = if fresh.is_empty() { others } else { fresh };
        let mut rng = seeded::derive_rng(ctx.seed, Stream::Divine, &[ctx.day as u64]);
        seeded::choose(&mut rng, &pool).ok_or_else(|| AgentError::Violation("nobody left to divine".into()))
    }
}

/// Survivors other than the attacker, ascending.
pub fn attack_candidates(attacker: AgentId, alive: &[AgentId]) -> Vec<AgentId> {
    let mut c: Vec<AgentId> = alive.iter().copied().filter(|&id| id != attacker).collect();
    c.sort();
    c.dedup();
    c
}

#[cfg(test)]
mod tests;
