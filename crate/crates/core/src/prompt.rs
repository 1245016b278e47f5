//! Prompt assembly: persona, experiment context, scene caption, recent
//! history and the student's question, fitted into a character budget.
//!
//! When the rendered prompt is too long, parts are dropped in a fixed order:
//! oldest history turns first, then the experiment context, then caption
//! lines from the bottom up. The preamble, the question and any revision
//! feedback always stay.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::Caption;

pub const DEFAULT_CHAR_BUDGET: usize = 6000;
pub const DEFAULT_MAX_HISTORY_TURNS: usize = 5;
/// Longest excerpt of a rejected response quoted back in revision feedback.
pub const REJECTED_EXCERPT_CHARS: usize = 300;

const SECTION_SEPARATOR: &str = "\n\n";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("the question is empty")]
    EmptyQuestion,
    #[error("prompt needs at least {required} characters but the budget is {budget}")]
    BudgetTooSmall { required: usize, budget: usize },
    #[error("a revision prompt needs at least one failure reason")]
    NoFailureReasons,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub question: String,
    pub answer: String,
}

/// Per-session conversational context. Updated by replacement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextStore {
    pub experiment_brief: String,
    pub history: Vec<HistoryTurn>,
    pub system_preamble: String,
    pub max_history_turns: usize,
}

impl ContextStore {
    pub fn new(experiment_brief: impl Into<String>, system_preamble: impl Into<String>) -> Self {
        Self {
            experiment_brief: experiment_brief.into(),
            history: Vec::new(),
            system_preamble: system_preamble.into(),
            max_history_turns: DEFAULT_MAX_HISTORY_TURNS,
        }
    }

    pub fn with_max_history_turns(mut self, n: usize) -> Self {
        self.max_history_turns = n;
        self.evict();
        self
    }

    fn evict(&mut self) {
        let excess = self.history.len().saturating_sub(self.max_history_turns);
        self.history.drain(..excess);
    }

    pub fn append_turn(&self, question: impl Into<String>, answer: impl Into<String>) -> Self {
        let mut next = self.clone();
        next.history.push(HistoryTurn {
            question: question.into(),
            answer: answer.into(),
        });
        next.evict();
        next
    }
}

impl Default for ContextStore {
    fn default() -> Self {
        Self::new(
            crate::fixtures::DEFAULT_EXPERIMENT_BRIEF,
            crate::fixtures::DEFAULT_SYSTEM_PREAMBLE,
        )
    }
}

pub fn append_turn(ctx: &ContextStore, question: &str, answer: &str) -> ContextStore {
    ctx.append_turn(question, answer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Preamble,
    Context,
    Scene,
    History,
    Question,
    RevisionFeedback,
}

impl SectionKind {
    pub fn header(self) -> &'static str {
        match self {
            Self::Preamble => "SYSTEM:",
            Self::Context => "CONTEXT:",
            Self::Scene => "SCENE:",
            Self::History => "HISTORY:",
            Self::Question => "QUESTION:",
            Self::RevisionFeedback => "REVISION FEEDBACK:",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSection {
    pub kind: SectionKind,
    pub text: String,
}

impl fmt::Display for PromptSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n{}", self.kind.header(), self.text)
    }
}

/// Serializable form of a prompt, as it appears in session logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub sections: Vec<PromptSection>,
    pub rendered: String,
    pub char_budget: usize,
}

impl PromptRecord {
    pub fn section(&self, kind: SectionKind) -> Option<&str> {
        self.sections.iter().find(|s| s.kind == kind).map(|s| s.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct FeedbackRound {
    rejected: String,
    reasons: Vec<String>,
}

/// Everything a prompt was built from, after truncation.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Parts {
    preamble: String,
    context: Vec<String>,
    scene_lines: Vec<String>,
    history: Vec<HistoryTurn>,
    question: String,
    feedback: Vec<FeedbackRound>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    sections: Vec<PromptSection>,
    rendered: String,
    char_budget: usize,
    parts: Parts,
}

impl Prompt {
    pub fn sections(&self) -> &[PromptSection] {
        &self.sections
    }

    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    pub fn char_budget(&self) -> usize {
        self.char_budget
    }

    pub fn question(&self) -> &str {
        &self.parts.question
    }

    pub fn preamble(&self) -> &str {
        &self.parts.preamble
    }

    pub fn section(&self, kind: SectionKind) -> Option<&str> {
        self.sections.iter().find(|s| s.kind == kind).map(|s| s.text.as_str())
    }

    pub fn has_section(&self, kind: SectionKind) -> bool {
        self.section(kind).is_some()
    }

    pub fn revision_rounds(&self) -> usize {
        self.parts.feedback.len()
    }

    pub fn record(&self) -> PromptRecord {
        PromptRecord {
            sections: self.sections.clone(),
            rendered: self.rendered.clone(),
            char_budget: self.char_budget,
        }
    }
}

fn excerpt(text: &str, max_chars: usize) -> String {
    let mut chars = text.chars();
    let head: String = chars.by_ref().take(max_chars).collect();
    if chars.next().is_some() {
        format!("{head}...")
    } else {
        head
    }
}

fn feedback_text(rounds: &[FeedbackRound]) -> String {
    let mut out = Vec::new();
    for (i, round) in rounds.iter().enumerate() {
        out.push(format!(
            "Attempt {} was rejected. Rejected response: \"{}\"",
            i + 1,
            excerpt(&round.rejected, REJECTED_EXCERPT_CHARS)
        ));
        for reason in &round.reasons {
            out.push(format!("- Fix: {reason}"));
        }
    }
    out.push("Answer the QUESTION again, correcting every problem listed above.".to_string());
    out.join("\n")
}

fn history_text(history: &[HistoryTurn]) -> String {
    history
        .iter()
        .map(|t| format!("Student: {}\nAssistant: {}", t.question, t.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

/// How much of each droppable part survives.
#[derive(Debug, Clone, Copy)]
struct Keep {
    history: usize,
    context: bool,
    scene_lines: usize,
}

fn assemble(parts: &Parts, keep: Keep) -> (Vec<PromptSection>, String) {
    let mut sections = vec![PromptSection {
        kind: SectionKind::Preamble,
        text: parts.preamble.clone(),
    }];
    let context: Vec<&str> = parts
        .context
        .iter()
        .map(String::as_str)
        .filter(|s| !s.trim().is_empty())
        .collect();
    if keep.context && !context.is_empty() {
        sections.push(PromptSection {
            kind: SectionKind::Context,
            text: context.join("\n"),
        });
    }
    if keep.scene_lines > 0 {
        sections.push(PromptSection {
            kind: SectionKind::Scene,
            text: parts.scene_lines[..keep.scene_lines].join("\n"),
        });
    }
    if keep.history > 0 {
        let start = parts.history.len() - keep.history;
        sections.push(PromptSection {
            kind: SectionKind::History,
            text: history_text(&parts.history[start..]),
        });
    }
    sections.push(PromptSection {
        kind: SectionKind::Question,
        text: parts.question.clone(),
    });
    if !parts.feedback.is_empty() {
        sections.push(PromptSection {
            kind: SectionKind::RevisionFeedback,
            text: feedback_text(&parts.feedback),
        });
    }
    let rendered = sections
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(SECTION_SEPARATOR);
    (sections, rendered)
}

fn fit(parts: Parts, budget: usize) -> Result<Prompt, PromptError> {
    let mut keep = Keep {
        history: parts.history.len(),
        context: true,
        scene_lines: parts.scene_lines.len(),
    };
    loop {
        let (sections, rendered) = assemble(&parts, keep);
        let len = rendered.chars().count();
        if len <= budget {
            let start = parts.history.len() - keep.history;
            let parts = Parts {
                context: if keep.context { parts.context } else { Vec::new() },
                scene_lines: parts.scene_lines[..keep.scene_lines].to_vec(),
                history: parts.history[start..].to_vec(),
                ..parts
            };
            return Ok(Prompt {
                sections,
                rendered,
                char_budget: budget,
                parts,
            });
        }
        if keep.history > 0 {
            keep.history -= 1;
        } else if keep.context {
            keep.context = false;
        } else if keep.scene_lines > 0 {
            keep.scene_lines -= 1;
        } else {
            return Err(PromptError::BudgetTooSmall { required: len, budget });
        }
    }
}

/// Build the prompt for `question` with extra context lines (for example a
/// resolved referent) placed after the experiment brief.
pub fn build_prompt_with_notes(
    question: &str,
    caption: &Caption,
    ctx: &ContextStore,
    notes: &[String],
    budget: usize,
) -> Result<Prompt, PromptError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    let mut context = vec![ctx.experiment_brief.clone()];
    context.extend(notes.iter().cloned());
    let parts = Parts {
        preamble: ctx.system_preamble.clone(),
        context,
        scene_lines: caption.text.lines().map(str::to_string).collect(),
        history: ctx.history.clone(),
        question: question.to_string(),
        feedback: Vec::new(),
    };
    fit(parts, budget)
}

pub fn build_prompt(
    question: &str,
    caption: &Caption,
    ctx: &ContextStore,
    budget: usize,
) -> Result<Prompt, PromptError> {
    build_prompt_with_notes(question, caption, ctx, &[], budget)
}

/// Extend `prior` with one more round of validation feedback.
pub fn build_revision_prompt(
    prior: &Prompt,
    response_text: &str,
    failure_reasons: &[String],
) -> Result<Prompt, PromptError> {
    if failure_reasons.is_empty() {
        return Err(PromptError::NoFailureReasons);
    }
    let mut parts = prior.parts.clone();
    parts.feedback.push(FeedbackRound {
        rejected: response_text.to_string(),
        reasons: failure_reasons.to_vec(),
    });
    fit(parts, prior.char_budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q1: &str = "What is the horizontal distance traveled by the right ball?";

    fn caption() -> Caption {
        Caption {
            text: "line one\nline two\nline three".into(),
            facts: vec![],
        }
    }

    fn ctx() -> ContextStore {
        ContextStore::new("Two balls leave a table.", "You are a lab assistant.")
    }

    #[test]
    fn question_is_last_section() {
        let p = build_prompt(Q1, &caption(), &ctx(), DEFAULT_CHAR_BUDGET).unwrap();
        let kinds: Vec<SectionKind> = p.sections().iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                SectionKind::Preamble,
                SectionKind::Context,
                SectionKind::Scene,
                SectionKind::Question
            ]
        );
        assert!(p.rendered().ends_with(&format!("QUESTION:\n{Q1}")));
        assert!(p
            .rendered()
            .starts_with("SYSTEM:\nYou are a lab assistant.\n\nCONTEXT:\n"));
    }

    #[test]
    fn empty_sections_are_elided() {
        let c = ContextStore::new("", "persona");
        let p = build_prompt(Q1, &caption(), &c, DEFAULT_CHAR_BUDGET).unwrap();
        assert!(!p.rendered().contains("CONTEXT:"));
        assert!(!p.rendered().contains("HISTORY:"));
    }

    #[test]
    fn scene_embeds_caption_verbatim() {
        let p = build_prompt(Q1, &caption(), &ctx(), DEFAULT_CHAR_BUDGET).unwrap();
        assert_eq!(p.section(SectionKind::Scene), Some(caption().text.as_str()));
    }

    #[test]
    fn truncation_drops_oldest_history_first() {
        let mut c = ctx();
        for i in 1..=5 {
            c = c.append_turn(format!("question {i}"), format!("answer {i}"));
        }
        let full = build_prompt(Q1, &caption(), &c, DEFAULT_CHAR_BUDGET).unwrap();
        let turn_len = "Student: question 1\nAssistant: answer 1\n".chars().count();
        let budget = full.rendered().chars().count() - turn_len - 1;
        let p = build_prompt(Q1, &caption(), &c, budget).unwrap();
        let history = p.section(SectionKind::History).unwrap();
        assert!(!history.contains("question 1") && !history.contains("question 2"));
        for i in 3..=5 {
            assert!(history.contains(&format!("question {i}")));
        }
        assert!(p.has_section(SectionKind::Context));
        assert!(p.rendered().chars().count() <= budget);
    }

    #[test]
    fn truncation_then_context_then_caption_tail() {
        let mut c = ctx();
        c = c.append_turn("old q", "old a");
        let minimal = format!("SYSTEM:\n{}\n\nQUESTION:\n{Q1}", c.system_preamble);
        let with_first_line = format!("SYSTEM:\n{}\n\nSCENE:\nline one\n\nQUESTION:\n{Q1}", c.system_preamble);
        let p = build_prompt(Q1, &caption(), &c, with_first_line.chars().count()).unwrap();
        assert_eq!(p.rendered(), with_first_line);
        let p = build_prompt(Q1, &caption(), &c, minimal.chars().count()).unwrap();
        assert_eq!(p.rendered(), minimal);
        let err = build_prompt(Q1, &caption(), &c, minimal.chars().count() - 1).unwrap_err();
        assert!(matches!(err, PromptError::BudgetTooSmall { .. }));
    }

    #[test]
    fn empty_question_rejected() {
        assert_eq!(
            build_prompt("  ", &caption(), &ctx(), DEFAULT_CHAR_BUDGET),
            Err(PromptError::EmptyQuestion)
        );
    }

    #[test]
    fn revision_appends_one_feedback_section() {
        let p = build_prompt(Q1, &caption(), &ctx(), DEFAULT_CHAR_BUDGET).unwrap();
        let r = build_revision_prompt(&p, "It is 5 meters.", &["VALUE_MISMATCH: 5 m".into()]).unwrap();
        let n = r
            .sections()
            .iter()
            .filter(|s| s.kind == SectionKind::RevisionFeedback)
            .count();
        assert_eq!(n, 1);
        assert_eq!(r.sections()[..p.sections().len()], *p.sections());
        assert!(r.rendered().starts_with(p.rendered()));
    }

    #[test]
    fn revision_accumulates_rounds_in_order() {
        let p = build_prompt(Q1, &caption(), &ctx(), DEFAULT_CHAR_BUDGET).unwrap();
        let r1 = build_revision_prompt(&p, "first wrong", &["A".into()]).unwrap();
        let r2 = build_revision_prompt(&r1, "second wrong", &["B".into()]).unwrap();
        let fb: Vec<&PromptSection> = r2
            .sections()
            .iter()
            .filter(|s| s.kind == SectionKind::RevisionFeedback)
            .collect();
        assert_eq!(fb.len(), 1);
        let first = fb[0].text.find("first wrong").unwrap();
        let second = fb[0].text.find("second wrong").unwrap();
        assert!(first < second);
        assert_eq!(r2.revision_rounds(), 2);
    }

    #[test]
    fn revision_without_reasons_is_an_error() {
        let p = build_prompt(Q1, &caption(), &ctx(), DEFAULT_CHAR_BUDGET).unwrap();
        assert_eq!(build_revision_prompt(&p, "x", &[]), Err(PromptError::NoFailureReasons));
    }

    #[test]
    fn long_rejected_response_is_excerpted() {
        let p = build_prompt(Q1, &caption(), &ctx(), DEFAULT_CHAR_BUDGET).unwrap();
        let long = "x".repeat(5000);
        let r = build_revision_prompt(&p, &long, &["TOO_LONG".into()]).unwrap();
        assert!(r.rendered().chars().count() < p.rendered().chars().count() + 600);
    }

    #[test]
    fn append_turn_evicts_oldest() {
        let mut c = ctx();
        assert_eq!(append_turn(&c, "q", "a").history.len(), 1);
        for i in 1..=6 {
            c = c.append_turn(format!("q{i}"), format!("a{i}"));
        }
        let qs: Vec<&str> = c.history.iter().map(|t| t.question.as_str()).collect();
        assert_eq!(qs, vec!["q2", "q3", "q4", "q5", "q6"]);
    }
}
