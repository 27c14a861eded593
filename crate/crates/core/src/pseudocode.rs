//! Task pseudo-code: an ordered list of natural-language conditional
//! statements, checked sequentially until one concludes a yes/no answer.
//!
//! This module parses pseudo-code text files, validates the chain structure,
//! and turns annotated condition traces into the numbered reasoning steps
//! used inside demonstrations.

use std::fs;
use std::io::BufRead;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{TaskKind, Verdict};

/// Where a branch of a conditional statement leads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchOutcome {
    Yes,
    No,
    /// Fall through to the next statement in the chain.
    Next,
}

impl BranchOutcome {
    fn as_verdict(self) -> Option<Verdict> {
        match self {
            BranchOutcome::Yes => Some(Verdict::Yes),
            BranchOutcome::No => Some(Verdict::No),
            BranchOutcome::Next => None,
        }
    }
}

/// The body of a statement: either a preamble (no branches) or a
/// condition with its two branch outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatementKind {
    Preamble,
    Conditional {
        condition: String,
        then_verdict: BranchOutcome,
        else_verdict: BranchOutcome,
    },
}

/// One line of pseudo-code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    /// Roman index as written, e.g. "II".
    pub index_roman: String,
    /// Statement text after the `ROMAN: ` prefix, verbatim.
    pub text: String,
    pub kind: StatementKind,
}

impl Statement {
    pub fn is_preamble(&self) -> bool {
        matches!(self.kind, StatementKind::Preamble)
    }

    /// The original line, `"{roman}: {text}"`.
    pub fn raw_line(&self) -> String {
        format!("{}: {}", self.index_roman, self.text)
    }
}

/// A validated pseudo-code chain for one task kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoCode {
    pub statements: Vec<Statement>,
    pub task_kind: TaskKind,
}

impl PseudoCode {
    /// The conditional statements, in evaluation order.
    pub fn conditionals(&self) -> impl Iterator<Item = &Statement> {
        self.statements.iter().filter(|s| !s.is_preamble())
    }

    pub fn conditional_count(&self) -> usize {
        self.conditionals().count()
    }
}

/// Per-prefix condition outcomes for one evaluation of a pseudo-code chain:
/// one boolean per statement actually checked, where only the final entry may
/// be true.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionTrace {
    pub outcomes: Vec<bool>,
}

impl ConditionTrace {
    pub fn new(outcomes: Vec<bool>) -> Result<Self, PseudoCodeError> {
        if let Some(pos) = outcomes.iter().position(|&b| b) {
            if pos + 1 != outcomes.len() {
                return Err(PseudoCodeError::InvalidTrace(
                    "a true outcome must be the last entry".into(),
                ));
            }
        }
        Ok(ConditionTrace { outcomes })
    }
}

/// Numbered reasoning lines plus the verdict they conclude.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningSteps {
    /// Step bodies in order, without their leading numbers.
    pub steps: Vec<String>,
    pub final_verdict: Verdict,
}

impl ReasoningSteps {
    /// Render the steps as `"{n}. {body}"` lines, numbering from `start`.
    /// The prompt renderer passes 2 when a self-indicator occupies line 1.
    pub fn numbered_lines(&self, start: usize) -> Vec<String> {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, body)| format!("{}. {}", start + i, body))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum PseudoCodeError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: cannot parse statement: {text:?}")]
    Unparseable { line: usize, text: String },
    #[error("line {line}: index {found:?} does not increase over {previous:?}")]
    NonMonotoneIndex {
        line: usize,
        found: String,
        previous: String,
    },
    #[error("pseudo-code has no conditional statement")]
    NoConditionals,
    #[error("terminal statement {0} does not cover all cases")]
    MissingTerminalCoverage(String),
    #[error("statement {0} never proceeds to the statements after it")]
    UnreachableStatements(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("trace has {got} outcomes but only {expected} statements are checked")]
    TraceTooLong { got: usize, expected: usize },
    #[error("trace ended after {got} outcomes without reaching a verdict")]
    TraceIncomplete { got: usize },
    #[error("statement {0} concluded with a next-branch at the end of the chain")]
    NextAtTerminal(String),
}

static LINE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([IVXLCDM]+)\s*:\s*(.+?)\s*$").unwrap());
static CONDITIONAL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^if\s+(.+?),?\s+the\s+answer\s+is\s+(yes|no)\s*,\s*otherwise,?\s+(.+?)\s*$")
        .unwrap()
});
static ELSE_NEXT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^check\s+rule\s+[IVXLCDM]+\.?$").unwrap());
static ELSE_VERDICT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^the\s+answer\s+is\s+(yes|no)\.?$").unwrap());

fn roman_value(roman: &str) -> Option<u32> {
    let mut total = 0i64;
    let mut prev = 0i64;
    for c in roman.chars().rev() {
        let v = match c {
            'I' => 1,
            'V' => 5,
            'X' => 10,
            'L' => 50,
            'C' => 100,
            'D' => 500,
            'M' => 1000,
            _ => return None,
        };
        if v < prev {
            total -= v;
        } else {
            total += v;
            prev = v;
        }
    }
    u32::try_from(total).ok()
}

fn parse_branch_verdict(word: &str) -> BranchOutcome {
    if word.eq_ignore_ascii_case("yes") {
        BranchOutcome::Yes
    } else {
        BranchOutcome::No
    }
}

/// Parse pseudo-code text: one statement per line, each starting with a Roman
/// numeral and a colon. Lines without an `If` are preambles; conditional
/// lines follow the `If ..., the answer is X, otherwise ...` shape.
pub fn parse_pseudocode(text: &str, task_kind: TaskKind) -> Result<PseudoCode, PseudoCodeError> {
    let mut statements = Vec::new();
    let mut prev: Option<(String, u32)> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let caps = LINE_RE
            .captures(trimmed)
            .ok_or_else(|| PseudoCodeError::Unparseable {
                line: line_no,
                text: trimmed.to_string(),
            })?;
        let roman = caps[1].to_string();
        let body = caps[2].to_string();
        let value = roman_value(&roman).ok_or_else(|| PseudoCodeError::Unparseable {
            line: line_no,
            text: trimmed.to_string(),
        })?;
        if let Some((prev_roman, prev_value)) = &prev {
            if value <= *prev_value {
                return Err(PseudoCodeError::NonMonotoneIndex {
                    line: line_no,
                    found: roman,
                    previous: prev_roman.clone(),
                });
            }
        }
        prev = Some((roman.clone(), value));

        let kind = if body.trim_start().to_ascii_lowercase().starts_with("if ") {
            let caps =
                CONDITIONAL_RE
                    .captures(&body)
                    .ok_or_else(|| PseudoCodeError::Unparseable {
                        line: line_no,
                        text: trimmed.to_string(),
                    })?;
            let condition = caps[1].to_string();
            let then_verdict = parse_branch_verdict(&caps[2]);
            let else_text = &caps[3];
            let else_verdict = if ELSE_NEXT_RE.is_match(else_text) {
                BranchOutcome::Next
            } else if let Some(v) = ELSE_VERDICT_RE.captures(else_text) {
                parse_branch_verdict(&v[1])
            } else {
                return Err(PseudoCodeError::Unparseable {
                    line: line_no,
                    text: trimmed.to_string(),
                });
            };
            StatementKind::Conditional {
                condition,
                then_verdict,
                else_verdict,
            }
        } else {
            StatementKind::Preamble
        };
        statements.push(Statement {
            index_roman: roman,
            text: body,
            kind,
        });
    }

    let conditionals: Vec<&Statement> = statements.iter().filter(|s| !s.is_preamble()).collect();
    if conditionals.is_empty() {
        return Err(PseudoCodeError::NoConditionals);
    }
    for (i, stmt) in conditionals.iter().enumerate() {
        let StatementKind::Conditional {
            then_verdict,
            else_verdict,
            ..
        } = &stmt.kind
        else {
            unreachable!()
        };
        let nexts = [then_verdict, else_verdict]
            .iter()
            .filter(|b| ***b == BranchOutcome::Next)
            .count();
        let is_terminal = i + 1 == conditionals.len();
        if is_terminal && nexts > 0 {
            return Err(PseudoCodeError::MissingTerminalCoverage(
                stmt.index_roman.clone(),
            ));
        }
        if !is_terminal && nexts != 1 {
            return Err(PseudoCodeError::UnreachableStatements(
                stmt.index_roman.clone(),
            ));
        }
    }
    Ok(PseudoCode {
        statements,
        task_kind,
    })
}

/// Parse a pseudo-code file.
pub fn load_pseudocode(
    path: impl AsRef<Path>,
    task_kind: TaskKind,
) -> Result<PseudoCode, PseudoCodeError> {
    let text = fs::read_to_string(path)?;
    parse_pseudocode(&text, task_kind)
}

/// Walk the chain with the given condition outcomes, emitting one reasoning
/// step per checked statement and the verdict the walk concludes with.
///
/// A true outcome stops at that statement's then-branch; a false outcome at
/// the terminal statement takes its else-branch. Step text follows a fixed
/// template so identical inputs yield byte-identical reasoning.
pub fn construct_reasoning(
    code: &PseudoCode,
    trace: &ConditionTrace,
) -> Result<ReasoningSteps, PseudoCodeError> {
    let conditionals: Vec<&Statement> = code.conditionals().collect();
    if trace.outcomes.len() > conditionals.len() {
        return Err(PseudoCodeError::TraceTooLong {
            got: trace.outcomes.len(),
            expected: conditionals.len(),
        });
    }
    let mut steps = Vec::new();
    for (i, (&held, stmt)) in trace.outcomes.iter().zip(&conditionals).enumerate() {
        let StatementKind::Conditional {
            condition,
            then_verdict,
            else_verdict,
        } = &stmt.kind
        else {
            unreachable!()
        };
        let is_terminal_check = i + 1 == conditionals.len();
        if held {
            let verdict = then_verdict
                .as_verdict()
                .ok_or_else(|| PseudoCodeError::NextAtTerminal(stmt.index_roman.clone()))?;
            steps.push(format!(
                "Checking rule {}: {} — holds; therefore the answer is {}.",
                stmt.index_roman, condition, verdict
            ));
            return Ok(ReasoningSteps {
                steps,
                final_verdict: verdict,
            });
        }
        if is_terminal_check {
            let verdict = else_verdict
                .as_verdict()
                .ok_or_else(|| PseudoCodeError::NextAtTerminal(stmt.index_roman.clone()))?;
            steps.push(format!(
                "Checking rule {}: {} — does not hold; therefore the answer is {}.",
                stmt.index_roman, condition, verdict
            ));
            return Ok(ReasoningSteps {
                steps,
                final_verdict: verdict,
            });
        }
        steps.push(format!(
            "Checking rule {}: {} — does not hold; proceeding to the next rule.",
            stmt.index_roman, condition
        ));
    }
    Err(PseudoCodeError::TraceIncomplete {
        got: trace.outcomes.len(),
    })
}

/// Human-authored trace annotation for one demonstration pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoAnnotation {
    pub demo_id: String,
    pub trace: Vec<bool>,
    pub label: bool,
}

/// Load JSONL demonstration annotations (`{"demo_id", "trace", "label"}`).
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<DemoAnnotation>, PseudoCodeError> {
    let file = fs::File::open(path.as_ref())?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ann: DemoAnnotation =
            serde_json::from_str(&line).map_err(|e| PseudoCodeError::InvalidTrace(format!(
                "line {}: {e}",
                idx + 1
            )))?;
        out.push(ann);
    }
    Ok(out)
}

/// Built-in schema-matching pseudo-code.
pub const SM_PSEUDOCODE: &str = include_str!("../assets/pseudocode/sm.txt");
/// Built-in entity-matching pseudo-code.
pub const EM_PSEUDOCODE: &str = include_str!("../assets/pseudocode/em.txt");

/// The built-in pseudo-code for a task kind.
pub fn builtin_pseudocode(task_kind: TaskKind) -> PseudoCode {
    let text = match task_kind {
        TaskKind::Sm => SM_PSEUDOCODE,
        TaskKind::Em => EM_PSEUDOCODE,
    };
    parse_pseudocode(text, task_kind).expect("built-in pseudo-code parses")
}
