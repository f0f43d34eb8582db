//! Prompt templates with `[SLOT]` markers, role task descriptions and the
//! persuasion example banks, bundled per language pack.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::game::{AgentId, Role};

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template {template} has no binding for [{slot}]")]
    UnboundSlot { template: String, slot: Slot },
    #[error("rendered {template} still contains the marker [{slot}]")]
    LeftoverMarker { template: String, slot: Slot },
    #[error("template {template} declares slots {found:?}, expected {expected:?}")]
    WrongSlots { template: String, found: Vec<Slot>, expected: Vec<Slot> },
    #[error("example bank {0} must hold exactly 3 examples that each mention [VOTE_TARGET]")]
    BadBank(PersuasionStrategy),
    #[error("unknown language pack {0:?}")]
    UnknownLanguage(String),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    TaskDescription,
    GameRules,
    DialogueHistory,
    DivinationResult,
    ConditionAnalysis,
    VoteTarget,
    PersuasionExamples,
    OwnStatements,
}

impl Slot {
    pub const ALL: [Slot; 8] = [
        Slot::TaskDescription,
        Slot::GameRules,
        Slot::DialogueHistory,
        Slot::DivinationResult,
        Slot::ConditionAnalysis,
        Slot::VoteTarget,
        Slot::PersuasionExamples,
        Slot::OwnStatements,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::TaskDescription => "TASK_DESCRIPTION",
            Slot::GameRules => "GAME_RULES",
            Slot::DialogueHistory => "DIALOGUE_HISTORY",
            Slot::DivinationResult => "DIVINATION_RESULT",
            Slot::ConditionAnalysis => "CONDITION_ANALYSIS",
            Slot::VoteTarget => "VOTE_TARGET",
            Slot::PersuasionExamples => "PERSUASION_EXAMPLES",
            Slot::OwnStatements => "OWN_STATEMENTS",
        }
    }

    pub fn marker(self) -> String {
        format!("[{}]", self.name())
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Known-slot markers of `text` with their byte ranges, in order.
fn marker_spans(text: &str) -> impl Iterator<Item = (usize, usize, Slot)> + '_ {
    text.match_indices('[').filter_map(move |(open, _)| {
        let close = open + text[open..].find(']')?;
        let slot = Slot::ALL.into_iter().find(|s| s.name() == &text[open + 1..close])?;
        Some((open, close + 1, slot))
    })
}

/// Markers of `text` that name a known slot.
pub fn markers_in(text: &str) -> BTreeSet<Slot> {
    marker_spans(text).map(|(_, _, s)| s).collect()
}

/// Neutralises slot markers inside free text (e.g. a player typing `[VOTE_TARGET]`).
pub fn defuse_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (start, end, slot) in marker_spans(text) {
        out.push_str(&text[last..start]);
        out.push('(');
        out.push_str(slot.name());
        out.push(')');
        last = end;
    }
    out.push_str(&text[last..]);
    out
}

pub type Bindings = BTreeMap<Slot, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    body: String,
    slots: BTreeSet<Slot>,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        PromptTemplate { id: id.into(), slots: markers_in(&body), body }
    }

    pub fn slots(&self) -> &BTreeSet<Slot> {
        &self.slots
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Replaces every marker in one pass. Bindings for slots the body does not use are ignored.
    pub fn render(&self, bindings: &Bindings) -> Result<String, TemplateError> {
        if let Some(&slot) = self.slots.iter().find(|s| !bindings.contains_key(s)) {
            return Err(TemplateError::UnboundSlot { template: self.id.clone(), slot });
        }
        let mut out = String::with_capacity(self.body.len() + bindings.values().map(String::len).sum::<usize>());
        let mut last = 0;
        for (start, end, slot) in marker_spans(&self.body) {
            out.push_str(&self.body[last..start]);
            out.push_str(&bindings[&slot]);
            last = end;
        }
        out.push_str(&self.body[last..]);
        if let Some((_, _, slot)) = marker_spans(&out).next() {
            return Err(TemplateError::LeftoverMarker { template: self.id.clone(), slot });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PersuasionStrategy {
    LogicalAppeal,
    CredibilityAppeal,
    EmotionalAppeal,
}

impl PersuasionStrategy {
    pub const ALL: [PersuasionStrategy; 3] =
        [PersuasionStrategy::LogicalAppeal, PersuasionStrategy::CredibilityAppeal, PersuasionStrategy::EmotionalAppeal];

    /// Fixed schedule: turn 3 logic, turn 4 credibility, turn 5 emotion.
    pub fn for_turn(turn: u32) -> Option<Self> {
        match turn {
            3 => Some(PersuasionStrategy::LogicalAppeal),
            4 => Some(PersuasionStrategy::CredibilityAppeal),
            5 => Some(PersuasionStrategy::EmotionalAppeal),
            _ => None,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            PersuasionStrategy::LogicalAppeal => "Logical Appeal",
            PersuasionStrategy::CredibilityAppeal => "Credibility Appeal",
            PersuasionStrategy::EmotionalAppeal => "Emotional Appeal",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            PersuasionStrategy::LogicalAppeal => {
                "Persuade with logic, facts and evidence, using rational and clear arguments."
            }
            PersuasionStrategy::CredibilityAppeal => {
                "Build your own credibility and authority so that the others trust and support your view."
            }
            PersuasionStrategy::EmotionalAppeal => {
                "Move the others by eliciting emotions such as fear, sympathy or anger."
            }
        }
    }
}

impl fmt::Display for PersuasionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

/// Three response examples for one strategy, each mentioning `[VOTE_TARGET]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleBank {
    pub strategy: PersuasionStrategy,
    examples: [String; 3],
}

impl ExampleBank {
    pub fn new(strategy: PersuasionStrategy, examples: Vec<String>) -> Result<Self, TemplateError> {
        let marker = Slot::VoteTarget.marker();
        let examples: [String; 3] = examples.try_into().map_err(|_| TemplateError::BadBank(strategy))?;
        if examples.iter().any(|e| !e.contains(&marker)) {
            return Err(TemplateError::BadBank(strategy));
        }
        Ok(ExampleBank { strategy, examples })
    }

    /// One example per non-empty line; `#` lines are comments.
    pub fn parse(strategy: PersuasionStrategy, text: &str) -> Result<Self, TemplateError> {
        let examples =
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect();
        ExampleBank::new(strategy, examples)
    }

    pub fn examples(&self) -> &[String; 3] {
        &self.examples
    }

    /// Examples with the target substituted.
    pub fn addressed_to(&self, target: AgentId) -> [String; 3] {
        let marker = Slot::VoteTarget.marker();
        let name = target.to_string();
        self.examples.clone().map(|e| e.replace(&marker, &name))
    }

    /// Text bound to `[PERSUASION_EXAMPLES]`.
    pub fn prompt_section(&self, target: AgentId) -> String {
        let mut out =
            format!("Strategy: {}. {}\nResponse examples:", self.strategy.title(), self.strategy.description());
        for (i, e) in self.addressed_to(target).iter().enumerate() {
            out.push_str(&format!("\nExample {}: {e}", i + 1));
        }
        out
    }
}

/// Template identifiers of a language pack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TemplateId {
    Analysis,
    AnalysisDivination,
    Response,
    ResponseDivination,
    Persuasion,
    Vote,
    VoteDivination,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::Analysis,
        TemplateId::AnalysisDivination,
        TemplateId::Response,
        TemplateId::ResponseDivination,
        TemplateId::Persuasion,
        TemplateId::Vote,
        TemplateId::VoteDivination,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateId::Analysis => "analysis",
            TemplateId::AnalysisDivination => "analysis_divination",
            TemplateId::Response => "response",
            TemplateId::ResponseDivination => "response_divination",
            TemplateId::Persuasion => "persuasion",
            TemplateId::Vote => "vote",
            TemplateId::VoteDivination => "vote_divination",
        }
    }

    fn expected_slots(self) -> BTreeSet<Slot> {
        use Slot::*;
        let base = [TaskDescription, GameRules, DialogueHistory];
        let extra: &[Slot] = match self {
            TemplateId::Analysis => &[],
            TemplateId::AnalysisDivination => &[DivinationResult],
            TemplateId::Response => &[ConditionAnalysis],
            TemplateId::ResponseDivination => &[ConditionAnalysis, DivinationResult],
            TemplateId::Persuasion => &[ConditionAnalysis, VoteTarget, PersuasionExamples],
            TemplateId::Vote => &[ConditionAnalysis, OwnStatements],
            TemplateId::VoteDivination => &[ConditionAnalysis, OwnStatements, DivinationResult],
        };
        base.iter().chain(extra).copied().collect()
    }
}

/// Everything an agent needs to build prompts in one language.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    pub language: String,
    templates: BTreeMap<TemplateId, PromptTemplate>,
    rules: String,
    tasks: BTreeMap<Role, String>,
    target_instruction: String,
    banks: BTreeMap<PersuasionStrategy, ExampleBank>,
}

macro_rules! en_asset {
    ($name:literal) => {
        include_str!(concat!("../../assets/en/", $name))
    };
}

fn role_stem(role: Role) -> &'static str {
    match role {
        Role::Villager => "villager",
        Role::Seer => "seer",
        Role::Possessed => "possessed",
        Role::Werewolf => "werewolf",
    }
}

fn bank_stem(strategy: PersuasionStrategy) -> &'static str {
    match strategy {
        PersuasionStrategy::LogicalAppeal => "logical",
        PersuasionStrategy::CredibilityAppeal => "credibility",
        PersuasionStrategy::EmotionalAppeal => "emotional",
    }
}

impl PromptLibrary {
    /// A bundled language pack. Only `"en"` ships.
    pub fn builtin(language: &str) -> Result<Self, TemplateError> {
        if language != "en" {
            return Err(TemplateError::UnknownLanguage(language.to_string()));
        }
        let files: BTreeMap<&str, &str> = [
            ("analysis.txt", en_asset!("analysis.txt")),
            ("analysis_divination.txt", en_asset!("analysis_divination.txt")),
            ("response.txt", en_asset!("response.txt")),
            ("response_divination.txt", en_asset!("response_divination.txt")),
            ("persuasion.txt", en_asset!("persuasion.txt")),
            ("vote.txt", en_asset!("vote.txt")),
            ("vote_divination.txt", en_asset!("vote_divination.txt")),
            ("rules.txt", en_asset!("rules.txt")),
            ("target_instruction.txt", en_asset!("target_instruction.txt")),
            ("task_villager.txt", en_asset!("task_villager.txt")),
            ("task_seer.txt", en_asset!("task_seer.txt")),
            ("task_possessed.txt", en_asset!("task_possessed.txt")),
            ("task_werewolf.txt", en_asset!("task_werewolf.txt")),
            ("banks/logical.txt", en_asset!("banks/logical.txt")),
            ("banks/credibility.txt", en_asset!("banks/credibility.txt")),
            ("banks/emotional.txt", en_asset!("banks/emotional.txt")),
        ]
        .into();
        Self::assemble(language, |name| Ok(files[name].to_string()))
    }

    /// Loads a language pack laid out like `assets/en` from a directory.
    pub fn load_dir(language: &str, dir: &Path) -> Result<Self, TemplateError> {
        Self::assemble(language, |name| {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map_err(|e| TemplateError::Io { path: path.display().to_string(), message: e.to_string() })
        })
    }

    fn assemble(
        language: &str,
        mut read: impl FnMut(&str) -> Result<String, TemplateError>,
    ) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for id in TemplateId::ALL {
            let t = PromptTemplate::new(id.file_stem(), read(&format!("{}.txt", id.file_stem()))?);
            let expected = id.expected_slots();
            if t.slots() != &expected {
                return Err(TemplateError::WrongSlots {
                    template: t.id.clone(),
                    found: t.slots().iter().copied().collect(),
                    expected: expected.into_iter().collect(),
                });
            }
            templates.insert(id, t);
        }
        let mut tasks = BTreeMap::new();
        for role in Role::ALL {
            tasks.insert(role, read(&format!("task_{}.txt", role_stem(role)))?.trim().to_string());
        }
        let mut banks = BTreeMap::new();
        for strategy in PersuasionStrategy::ALL {
            let text = read(&format!("banks/{}.txt", bank_stem(strategy)))?;
            banks.insert(strategy, ExampleBank::parse(strategy, &text)?);
        }
        Ok(PromptLibrary {
            language: language.to_string(),
            templates,
            rules: read("rules.txt")?.trim().to_string(),
            tasks,
            target_instruction: read("target_instruction.txt")?.trim().to_string(),
            banks,
        })
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn rules(&self) -> &str {
        &self.rules
    }

    pub fn task(&self, role: Role) -> &str {
        &self.tasks[&role]
    }

    pub fn target_instruction(&self) -> &str {
        &self.target_instruction
    }

    pub fn bank(&self, strategy: PersuasionStrategy) -> &ExampleBank {
        &self.banks[&strategy]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(i: u8) -> AgentId {
        AgentId::new(i).unwrap()
    }

    #[test]
    fn render_binds_every_marker() {
        let t = PromptTemplate::new("t", "Hi [TASK_DESCRIPTION], vote [VOTE_TARGET] or [VOTE_TARGET]. [x]");
        let mut b = Bindings::new();
        b.insert(Slot::TaskDescription, "you".into());
        assert_eq!(t.render(&b), Err(TemplateError::UnboundSlot { template: "t".into(), slot: Slot::VoteTarget }));
        b.insert(Slot::VoteTarget, "Agent[03]".into());
        b.insert(Slot::GameRules, "unused".into());
        assert_eq!(t.render(&b).unwrap(), "Hi you, vote Agent[03] or Agent[03]. [x]");
    }

    #[test]
    fn render_is_single_pass_and_checks_leftovers() {
        let t = PromptTemplate::new("t", "[CONDITION_ANALYSIS]");
        let b: Bindings = [(Slot::ConditionAnalysis, "contains [VOTE_TARGET]".to_string())].into();
        assert!(matches!(t.render(&b), Err(TemplateError::LeftoverMarker { .. })));
        let b: Bindings = [(Slot::ConditionAnalysis, defuse_markers("contains [VOTE_TARGET]"))].into();
        assert_eq!(t.render(&b).unwrap(), "contains (VOTE_TARGET)");
    }

    #[test]
    fn schedule_is_fixed() {
        assert_eq!(PersuasionStrategy::for_turn(3), Some(PersuasionStrategy::LogicalAppeal));
        assert_eq!(PersuasionStrategy::for_turn(4), Some(PersuasionStrategy::CredibilityAppeal));
        assert_eq!(PersuasionStrategy::for_turn(5), Some(PersuasionStrategy::EmotionalAppeal));
        assert_eq!(PersuasionStrategy::for_turn(2), None);
        assert_eq!(PersuasionStrategy::for_turn(6), None);
    }

    #[test]
    fn builtin_pack_is_complete() {
        let lib = PromptLibrary::builtin("en").unwrap();
        for s in PersuasionStrategy::ALL {
            let bank = lib.bank(s);
            assert_eq!(bank.examples().len(), 3);
            for e in bank.addressed_to(id(3)) {
                assert!(e.contains("Agent[03]") && !e.contains("[VOTE_TARGET]"));
            }
        }
        assert!(lib.bank(PersuasionStrategy::CredibilityAppeal).examples()[0]
            .starts_with("I've served as a judge in numerous werewolf tournaments"));
        assert!(lib.target_instruction().starts_with("Finally, choose the player that threatens you the most"));
        assert!(!lib.template(TemplateId::Response).slots().contains(&Slot::DivinationResult));
        assert!(PromptLibrary::builtin("ja").is_err());
    }

    #[test]
    fn bank_needs_three_targeted_examples() {
        let s = PersuasionStrategy::LogicalAppeal;
        assert!(ExampleBank::parse(s, "a [VOTE_TARGET]\nb [VOTE_TARGET]").is_err());
        assert!(ExampleBank::parse(s, "a [VOTE_TARGET]\nb [VOTE_TARGET]\nc").is_err());
        assert!(ExampleBank::parse(s, "# c\na [VOTE_TARGET]\n\nb [VOTE_TARGET]\nc [VOTE_TARGET]").is_ok());
    }

    #[test]
    fn load_dir_matches_builtin_and_validates_slots() {
        let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/en");
        let lib = PromptLibrary::load_dir("en", &src).unwrap();
        let builtin = PromptLibrary::builtin("en").unwrap();
        assert_eq!(lib.template(TemplateId::Vote), builtin.template(TemplateId::Vote));

        let tmp = tempfile::tempdir().unwrap();
        copy_dir(&src, tmp.path());
        std::fs::write(
            tmp.path().join("response.txt"),
            "[TASK_DESCRIPTION] [GAME_RULES] [DIALOGUE_HISTORY] [CONDITION_ANALYSIS] [DIVINATION_RESULT]",
        )
        .unwrap();
        assert!(matches!(PromptLibrary::load_dir("en", tmp.path()), Err(TemplateError::WrongSlots { .. })));
    }

    fn copy_dir(from: &Path, to: &Path) {
        std::fs::create_dir_all(to).unwrap();
        for entry in std::fs::read_dir(from).unwrap() {
            let entry = entry.unwrap();
            let dest = to.join(entry.file_name());
            if entry.file_type().unwrap().is_dir() {
                copy_dir(&entry.path(), &dest);
            } else {
                std::fs::copy(entry.path(), dest).unwrap();
            }
        }
    }
}
