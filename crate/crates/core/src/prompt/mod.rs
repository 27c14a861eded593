//! Prompt serialization: assemble k-shot prompts from pseudo-code, the
//! target pair, retrieved knowledge, demonstrations, and an optional
//! self-indicator, following a fixed index discipline (Roman numerals for
//! rules, letters for knowledge, numbers for reasoning steps).

pub mod template;

use std::collections::HashMap;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::KnowledgeItem;
use crate::llm::{LlmBackend, LlmError};
use crate::model::{
    pair_record_from_value, pair_record_to_value, render_item, CandidatePair, MappingPool,
    TaskKind,
};
use crate::pseudocode::{
    construct_reasoning, ConditionTrace, DemoAnnotation, PseudoCode, PseudoCodeError,
    ReasoningSteps,
};
use template::{render, Slot, TemplateError};

/// LLM-produced summaries for the two sides of a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSummaries {
    pub left: String,
    pub right: String,
}

/// A labeled example pair with its annotated condition trace, used for
/// k-shot prompting.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub pair: CandidatePair,
    pub trace: ConditionTrace,
    pub label: bool,
    /// When present, replaces the raw descriptions in rendering.
    pub summarized: Option<PairSummaries>,
}

/// A short LLM-generated summary of the target pair's key information,
/// inserted as reasoning line 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfIndicator {
    pub text: String,
}

/// Strategy for the summarization pretask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStrategy {
    /// No summarization.
    None,
    /// Summarize demonstration pairs only.
    DemoOnly,
    /// Summarize demonstrations and the target pair.
    All,
}

/// Rendering flags. Defaults match the full system configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Expected demonstration count (4 for SM, 2 for EM in the reference
    /// setup).
    pub shots: usize,
    /// Insert the self-indicator as reasoning line 1.
    pub self_indicator: bool,
    /// Roman numerals for rules, letters for knowledge, numbers for
    /// reasoning; plain numbers everywhere when off.
    pub u_indices: bool,
    /// Use the task-oriented question wording.
    pub task_oriented_instruction: bool,
    /// Present the pseudo-code block as "Rules for the task".
    pub know2rule: bool,
    /// Place the question and rules once at the top instead of repeating
    /// them per demonstration.
    pub instruction_extraction: bool,
    /// Keep the sequential-check preamble statement in the rules block.
    pub keep_preamble: bool,
    pub summary_strategy: SummaryStrategy,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            shots: 0,
            self_indicator: true,
            u_indices: true,
            task_oriented_instruction: true,
            know2rule: true,
            instruction_extraction: true,
            keep_preamble: true,
            summary_strategy: SummaryStrategy::DemoOnly,
        }
    }
}

/// A fully serialized prompt ready for a backend.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub template_id: TaskKind,
    pub body: String,
    pub k: usize,
    pub source: String,
    pub options: RenderOptions,
}

/// A demonstration plus everything source-specific needed to render it:
/// its knowledge list, optional self-indicator, and constructed reasoning.
#[derive(Debug, Clone)]
pub struct PreparedDemo {
    pub demo: Demonstration,
    pub knowledge: Vec<KnowledgeItem>,
    pub self_indicator: Option<SelfIndicator>,
    pub reasoning: ReasoningSteps,
}

impl PreparedDemo {
    /// Construct reasoning from the demo's trace and check it agrees with
    /// the label.
    pub fn new(
        demo: Demonstration,
        code: &PseudoCode,
        knowledge: Vec<KnowledgeItem>,
        self_indicator: Option<SelfIndicator>,
    ) -> Result<Self, PromptError> {
        let reasoning = construct_reasoning(code, &demo.trace)?;
        if reasoning.final_verdict.as_bool() != demo.label {
            return Err(PromptError::LabelMismatch {
                demo_id: demo.pair.id.clone(),
                label: demo.label,
                verdict: reasoning.final_verdict.as_bool(),
            });
        }
        Ok(PreparedDemo {
            demo,
            knowledge,
            self_indicator,
            reasoning,
        })
    }
}

/// The target side of a prompt.
#[derive(Debug, Clone, Copy)]
pub struct RenderTarget<'a> {
    pub pair: &'a CandidatePair,
    pub knowledge: &'a [KnowledgeItem],
    pub self_indicator: Option<&'a SelfIndicator>,
    /// Used only under [`SummaryStrategy::All`].
    pub summaries: Option<&'a PairSummaries>,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template error: {0}")]
    Template(#[from] TemplateError),
    #[error("expected {expected} demonstrations, got {got}")]
    ShotMismatch { expected: usize, got: usize },
    #[error("demonstration {demo_id:?}: label {label} but reasoning concludes {verdict}")]
    LabelMismatch {
        demo_id: String,
        label: bool,
        verdict: bool,
    },
    #[error(transparent)]
    Pseudo(#[from] PseudoCodeError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed demonstration ({detail})")]
    Malformed { line: usize, detail: String },
    #[error("demonstration {0:?} not found in pool")]
    UnknownDemo(String),
}

/// The template texts used for prompt assembly and the pretask calls.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub sm_match: String,
    pub em_match: String,
    pub header_block: String,
    pub demo_block: String,
    pub keyword_extraction_sm: String,
    pub keyword_extraction_em: String,
    pub keyword_filter_sm: String,
    pub keyword_filter_em: String,
    pub self_indicator_sm: String,
    pub self_indicator_em: String,
    pub demo_summarization_sm: String,
    pub demo_summarization_em: String,
    pub retrieval_summarization: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            sm_match: include_str!("../../assets/templates/sm_match.txt").into(),
            em_match: include_str!("../../assets/templates/em_match.txt").into(),
            header_block: include_str!("../../assets/templates/header_block.txt").into(),
            demo_block: include_str!("../../assets/templates/demo_block.txt").into(),
            keyword_extraction_sm: include_str!("../../assets/templates/keyword_extraction_sm.txt")
                .into(),
            keyword_extraction_em: include_str!("../../assets/templates/keyword_extraction_em.txt")
                .into(),
            keyword_filter_sm: include_str!("../../assets/templates/keyword_filter_sm.txt").into(),
            keyword_filter_em: include_str!("../../assets/templates/keyword_filter_em.txt").into(),
            self_indicator_sm: include_str!("../../assets/templates/self_indicator_sm.txt").into(),
            self_indicator_em: include_str!("../../assets/templates/self_indicator_em.txt").into(),
            demo_summarization_sm: include_str!("../../assets/templates/demo_summarization_sm.txt")
                .into(),
            demo_summarization_em: include_str!("../../assets/templates/demo_summarization_em.txt")
                .into(),
            retrieval_summarization: include_str!(
                "../../assets/templates/retrieval_summarization.txt"
            )
            .into(),
        }
    }
}

const SM_QUESTION: &str = "Can records in schema B be transformed and stored in schema A? The task should be solved by completing the reasoning steps and concluding a final answer ONLY yes or no. Do not stop until you draw a final answer. Schema name is the table and column names of the schema separated by a dash.";
const SM_QUESTION_PLAIN: &str = "Are schema A and B the same? The task should be solved by completing the reasoning steps and concluding a final answer ONLY yes or no. Do not stop until you draw a final answer. Schema name is the table and column names of the schema separated by a dash.";
const EM_QUESTION: &str = "Do entity A and entity B refer to the same real-world concept? You must think step by step, and finally draw an answer only yes or no.";

fn question_text(kind: TaskKind, task_oriented: bool) -> &'static str {
    match (kind, task_oriented) {
        (TaskKind::Sm, true) => SM_QUESTION,
        (TaskKind::Sm, false) => SM_QUESTION_PLAIN,
        (TaskKind::Em, _) => EM_QUESTION,
    }
}

fn rules_label(know2rule: bool) -> &'static str {
    if know2rule {
        "Rules for the task:"
    } else {
        "Knowledge for the task:"
    }
}

/// Spreadsheet-style lowercase letter index: a, b, ..., z, aa, ab, ...
pub(crate) fn letter_index(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Render the two sides of a pair as labeled lines, optionally replacing the
/// descriptions with summaries.
fn pair_lines(
    pair: &CandidatePair,
    summaries: Option<&PairSummaries>,
) -> Vec<String> {
    let (left_name, left_desc) = render_item(&pair.left);
    let (right_name, right_desc) = render_item(&pair.right);
    let (left_desc, right_desc) = match summaries {
        Some(s) => (s.left.clone(), s.right.clone()),
        None => (left_desc, right_desc),
    };
    let noun = match pair.kind() {
        TaskKind::Sm => "schema",
        TaskKind::Em => "entity",
    };
    let title = match pair.kind() {
        TaskKind::Sm => "Schema",
        TaskKind::Em => "Entity",
    };
    vec![
        format!("{title} A: {left_name}"),
        format!("Description of {noun} A: {left_desc}"),
        format!("{title} B: {right_name}"),
        format!("Description of {noun} B: {right_desc}"),
    ]
}

fn knowledge_lines(items: &[KnowledgeItem], u_indices: bool) -> Vec<String> {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            if u_indices {
                format!("{}. {}", letter_index(i), item.text)
            } else {
                format!("{}. {}", i + 1, item.text)
            }
        })
        .collect()
}

fn rule_lines(code: &PseudoCode, opts: &RenderOptions) -> Vec<String> {
    code.statements
        .iter()
        .filter(|s| opts.keep_preamble || !s.is_preamble())
        .enumerate()
        .map(|(i, s)| {
            if opts.u_indices {
                s.raw_line()
            } else {
                format!("{}: {}", i + 1, s.text)
            }
        })
        .collect()
}

fn header_block(
    code: &PseudoCode,
    kind: TaskKind,
    opts: &RenderOptions,
    templates: &TemplateSet,
) -> Result<String, TemplateError> {
    let slots: HashMap<&str, Slot> = [
        ("question", Slot::text(question_text(kind, opts.task_oriented_instruction))),
        ("rules_label", Slot::text(rules_label(opts.know2rule))),
        ("rules", Slot::list(rule_lines(code, opts))),
    ]
    .into_iter()
    .collect();
    render(&templates.header_block, &slots)
}

fn demo_reasoning_lines(demo: &PreparedDemo, opts: &RenderOptions) -> Vec<String> {
    match (&demo.self_indicator, opts.self_indicator) {
        (Some(si), true) => {
            let mut lines = vec![format!("1. {}", si.text)];
            lines.extend(demo.reasoning.numbered_lines(2));
            lines
        }
        _ => demo.reasoning.numbered_lines(1),
    }
}

fn demo_block(
    demo: &PreparedDemo,
    n: usize,
    header: Option<&str>,
    opts: &RenderOptions,
    templates: &TemplateSet,
) -> Result<String, PromptError> {
    let summaries = match opts.summary_strategy {
        SummaryStrategy::None => None,
        _ => demo.summarized_view(),
    };
    let slots: HashMap<&str, Slot> = [
        ("n", Slot::text(n.to_string())),
        ("pair", Slot::list(pair_lines(&demo.demo.pair, summaries))),
        (
            "knowledge",
            Slot::list(knowledge_lines(&demo.knowledge, opts.u_indices)),
        ),
        ("reasoning", Slot::list(demo_reasoning_lines(demo, opts))),
        (
            "answer",
            Slot::text(if demo.demo.label { "yes" } else { "no" }),
        ),
    ]
    .into_iter()
    .collect();
    let block = render(&templates.demo_block, &slots)?;
    Ok(match header {
        Some(h) => format!("{h}\n\n{block}"),
        None => block,
    })
}

/// Assemble the full prompt body for one knowledge source.
pub fn render_prompt(
    code: &PseudoCode,
    target: &RenderTarget<'_>,
    demos: &[PreparedDemo],
    opts: &RenderOptions,
    source: &str,
    templates: &TemplateSet,
) -> Result<PromptBundle, PromptError> {
    if demos.len() != opts.shots {
        return Err(PromptError::ShotMismatch {
            expected: opts.shots,
            got: demos.len(),
        });
    }
    let kind = target.pair.kind();
    let header = header_block(code, kind, opts, templates)?;
    let per_demo_header = (!opts.instruction_extraction).then_some(header.as_str());
    let demo_blocks: Vec<String> = demos
        .iter()
        .enumerate()
        .map(|(i, d)| demo_block(d, i + 1, per_demo_header, opts, templates))
        .collect::<Result<_, _>>()?;

    let target_summaries = match opts.summary_strategy {
        SummaryStrategy::All => target.summaries,
        _ => None,
    };
    let stub = match (target.self_indicator, opts.self_indicator) {
        (Some(si), true) => vec![format!("1. {}", si.text)],
        _ => Vec::new(),
    };
    let header_slot = if opts.instruction_extraction {
        vec![header.clone()]
    } else {
        vec![]
    };
    let slots: HashMap<&str, Slot> = [
        ("header", Slot::list(header_slot)),
        ("demonstrations", Slot::list(demo_blocks)),
        ("pair", Slot::list(pair_lines(target.pair, target_summaries))),
        (
            "knowledge",
            Slot::list(knowledge_lines(target.knowledge, opts.u_indices)),
        ),
        ("reasoning", Slot::list(stub)),
    ]
    .into_iter()
    .collect();
    let skeleton = match kind {
        TaskKind::Sm => &templates.sm_match,
        TaskKind::Em => &templates.em_match,
    };
    let body = render(skeleton, &slots)?;
    Ok(PromptBundle {
        template_id: kind,
        body,
        k: demos.len(),
        source: source.to_string(),
        options: opts.clone(),
    })
}

impl PreparedDemo {
    fn summarized_view(&self) -> Option<&PairSummaries> {
        self.demo.summarized.as_ref()
    }
}

/// Summarize the two sides of a pair in two separate backend calls. Returns
/// `None` (with a warning) on any failure so callers can fall back to the
/// raw descriptions.
pub fn summarize_pair(
    pair: &CandidatePair,
    backend: &dyn LlmBackend,
    params: &crate::llm::GenerationParams,
    templates: &TemplateSet,
) -> Option<PairSummaries> {
    let template = match pair.kind() {
        TaskKind::Sm => &templates.demo_summarization_sm,
        TaskKind::Em => &templates.demo_summarization_em,
    };
    let mut summaries = Vec::with_capacity(2);
    for item in [&pair.left, &pair.right] {
        let (name, desc) = render_item(item);
        let slots: HashMap<&str, Slot> = [
            ("name", Slot::text(name)),
            ("description", Slot::text(desc)),
        ]
        .into_iter()
        .collect();
        let prompt = match render(template, &slots) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("pair {}: summarization template error: {e}", pair.id);
                return None;
            }
        };
        match backend.complete_text(&prompt, params) {
            Ok(resp) => summaries.push(resp.text.trim().to_string()),
            Err(e) => {
                log::warn!("pair {}: summarization failed, keeping raw descriptions: {e}", pair.id);
                return None;
            }
        }
    }
    Some(PairSummaries {
        left: summaries[0].clone(),
        right: summaries[1].clone(),
    })
}

/// Summarize both sides of a demonstration pair. On backend failure the
/// demo is returned unsummarized.
pub fn summarize_demo(
    demo: &Demonstration,
    backend: &dyn LlmBackend,
    params: &crate::llm::GenerationParams,
    templates: &TemplateSet,
) -> Demonstration {
    let mut out = demo.clone();
    if let Some(summaries) = summarize_pair(&demo.pair, backend, params, templates) {
        out.summarized = Some(summaries);
    }
    out
}

/// Generate the self-indicator for a pair given its knowledge list.
pub fn extract_self_indicator(
    pair: &CandidatePair,
    knowledge: &[KnowledgeItem],
    backend: &dyn LlmBackend,
    params: &crate::llm::GenerationParams,
    templates: &TemplateSet,
) -> Result<SelfIndicator, PromptError> {
    let template = match pair.kind() {
        TaskKind::Sm => &templates.self_indicator_sm,
        TaskKind::Em => &templates.self_indicator_em,
    };
    let slots: HashMap<&str, Slot> = [
        ("pair", Slot::list(pair_lines(pair, None))),
        ("knowledge", Slot::list(knowledge_lines(knowledge, true))),
    ]
    .into_iter()
    .collect();
    let prompt = render(template, &slots)?;
    let resp = backend.complete_text(&prompt, params)?;
    Ok(SelfIndicator { text: resp.text })
}

#[derive(Serialize, Deserialize)]
struct DemoRecord {
    pair: serde_json::Value,
    trace: Vec<bool>,
    label: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    summaries: Option<PairSummaries>,
}

/// Load a JSONL demonstration file: `{"pair": <pair record>, "trace": [bool],
/// "label": bool, "summaries"?: {"left", "right"}}`.
pub fn load_demonstrations(path: impl AsRef<Path>) -> Result<Vec<Demonstration>, PromptError> {
    let file = fs::File::open(path.as_ref())?;
    let mut demos = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DemoRecord =
            serde_json::from_str(&line).map_err(|e| PromptError::Malformed {
                line: line_no,
                detail: e.to_string(),
            })?;
        let pair = pair_record_from_value(&record.pair).map_err(|detail| {
            PromptError::Malformed {
                line: line_no,
                detail,
            }
        })?;
        let trace = ConditionTrace::new(record.trace)?;
        demos.push(Demonstration {
            pair,
            trace,
            label: record.label,
            summarized: record.summaries,
        });
    }
    Ok(demos)
}

/// Write demonstrations back out as JSONL.
pub fn save_demonstrations(
    demos: &[Demonstration],
    path: impl AsRef<Path>,
) -> Result<(), PromptError> {
    use std::io::Write;
    let mut out = fs::File::create(path.as_ref())?;
    for demo in demos {
        let record = DemoRecord {
            pair: pair_record_to_value(&demo.pair),
            trace: demo.trace.outcomes.clone(),
            label: demo.label,
            summaries: demo.summarized.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&record).expect("demo record serializes"))?;
    }
    Ok(())
}

/// Join per-id trace annotations against a pool to build demonstrations.
pub fn demos_from_annotations(
    pool: &MappingPool,
    annotations: &[DemoAnnotation],
) -> Result<Vec<Demonstration>, PromptError> {
    annotations
        .iter()
        .map(|ann| {
            let pair = pool
                .get(&ann.demo_id)
                .ok_or_else(|| PromptError::UnknownDemo(ann.demo_id.clone()))?;
            Ok(Demonstration {
                pair: pair.clone(),
                trace: ConditionTrace::new(ann.trace.clone())?,
                label: ann.label,
                summarized: None,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::Source;
    use crate::llm::{GenerationParams, MockBackend, MockRule};
    use crate::model::{EntityItem, Item, SchemaItem};
    use crate::pseudocode::builtin_pseudocode;

    fn sm_pair(id: &str) -> CandidatePair {
        CandidatePair::new(
            id,
            Item::Schema(
                SchemaItem::new("provider", "npi", "provider directory", "the npi").unwrap(),
            ),
            Item::Schema(
                SchemaItem::new("practitioner", "identifier", "clinicians", "unique id").unwrap(),
            ),
            None,
        )
        .unwrap()
    }

    fn item(text: &str) -> KnowledgeItem {
        KnowledgeItem {
            source: Source::Dak,
            text: text.into(),
            origin_key: "k".into(),
        }
    }

    #[test]
    fn letter_indices_wrap_after_z() {
        assert_eq!(letter_index(0), "a");
        assert_eq!(letter_index(25), "z");
        assert_eq!(letter_index(26), "aa");
        assert_eq!(letter_index(27), "ab");
    }

    #[test]
    fn minimal_prompt_has_question_rules_and_target() {
        let code = builtin_pseudocode(TaskKind::Sm);
        let pair = sm_pair("p1");
        let target = RenderTarget {
            pair: &pair,
            knowledge: &[],
            self_indicator: None,
            summaries: None,
        };
        let opts = RenderOptions::default();
        let bundle = render_prompt(&code, &target, &[], &opts, "null", &TemplateSet::default())
            .unwrap();
        let body = &bundle.body;
        assert!(body.starts_with("Question:\n"));
        assert!(body.contains("Rules for the task:\nI: Rules II, III, and IV"));
        assert!(body.contains("Your turn:\nSchema A: provider-npi"));
        assert!(body.ends_with("Please continue the reasoning until you draw a final answer ONLY yes or no:"));
        assert!(!body.contains("Example 1:"));
        assert!(!body.contains("\n\n\n"), "no double blank lines:\n{body}");
    }

    #[test]
    fn self_indicator_becomes_reasoning_line_one() {
        let code = builtin_pseudocode(TaskKind::Sm);
        let pair = sm_pair("p1");
        let si = SelfIndicator {
            text: "Both schemas identify providers.".into(),
        };
        let target = RenderTarget {
            pair: &pair,
            knowledge: &[item("provider: provider table")],
            self_indicator: Some(&si),
            summaries: None,
        };
        let opts = RenderOptions::default();
        let bundle = render_prompt(&code, &target, &[], &opts, "dak", &TemplateSet::default())
            .unwrap();
        assert!(bundle
            .body
            .contains("Reasoning:\n1. Both schemas identify providers.\nPlease continue"));
        assert!(bundle.body.contains("Knowledge for the task:\na. provider: provider table"));
    }

    #[test]
    fn shot_mismatch_is_an_error() {
        let code = builtin_pseudocode(TaskKind::Sm);
        let pair = sm_pair("p1");
        let target = RenderTarget {
            pair: &pair,
            knowledge: &[],
            self_indicator: None,
            summaries: None,
        };
        let opts = RenderOptions {
            shots: 2,
            ..Default::default()
        };
        assert!(matches!(
            render_prompt(&code, &target, &[], &opts, "null", &TemplateSet::default()),
            Err(PromptError::ShotMismatch { expected: 2, got: 0 })
        ));
    }

    #[test]
    fn prepared_demo_rejects_label_verdict_mismatch() {
        let code = builtin_pseudocode(TaskKind::Sm);
        let demo = Demonstration {
            pair: sm_pair("d1"),
            trace: ConditionTrace::new(vec![true]).unwrap(),
            label: true, // trace [true] concludes "no" under the SM rules
            summarized: None,
        };
        assert!(matches!(
            PreparedDemo::new(demo, &code, vec![], None),
            Err(PromptError::LabelMismatch { .. })
        ));
    }

    #[test]
    fn demo_block_renders_reasoning_and_answer() {
        let code = builtin_pseudocode(TaskKind::Sm);
        let demo = Demonstration {
            pair: sm_pair("d1"),
            trace: ConditionTrace::new(vec![false, false, false]).unwrap(),
            label: true,
            summarized: Some(PairSummaries {
                left: "summary left".into(),
                right: "summary right".into(),
            }),
        };
        let prepared = PreparedDemo::new(demo, &code, vec![item("k1 text")], None).unwrap();
        let pair = sm_pair("p1");
        let target = RenderTarget {
            pair: &pair,
            knowledge: &[],
            self_indicator: None,
            summaries: None,
        };
        let opts = RenderOptions {
            shots: 1,
            ..Default::default()
        };
        let bundle = render_prompt(
            &code,
            &target,
            &[prepared],
            &opts,
            "dak",
            &TemplateSet::default(),
        )
        .unwrap();
        let body = &bundle.body;
        assert!(body.contains("Example 1:\nSchema A: provider-npi\nDescription of schema A: summary left"));
        assert!(body.contains("a. k1 text"));
        assert!(body.contains("1. Checking rule II:"));
        assert!(body.contains("Answer: yes"));
    }

    #[test]
    fn u_indices_off_numbers_everything() {
        let code = builtin_pseudocode(TaskKind::Sm);
        let pair = sm_pair("p1");
        let target = RenderTarget {
            pair: &pair,
            knowledge: &[item("fact")],
            self_indicator: None,
            summaries: None,
        };
        let opts = RenderOptions {
            u_indices: false,
            ..Default::default()
        };
        let bundle = render_prompt(&code, &target, &[], &opts, "dak", &TemplateSet::default())
            .unwrap();
        assert!(bundle.body.contains("1: Rules II, III, and IV"));
        assert!(bundle.body.contains("Knowledge for the task:\n1. fact"));
    }

    #[test]
    fn preamble_can_be_dropped() {
        let code = builtin_pseudocode(TaskKind::Sm);
        let pair = sm_pair("p1");
        let target = RenderTarget {
            pair: &pair,
            knowledge: &[],
            self_indicator: None,
            summaries: None,
        };
        let opts = RenderOptions {
            keep_preamble: false,
            ..Default::default()
        };
        let bundle = render_prompt(&code, &target, &[], &opts, "null", &TemplateSet::default())
            .unwrap();
        assert!(!bundle.body.contains("MUST be checked SEQUENTIALLY"));
        assert!(bundle.body.contains("Rules for the task:\nII: If the columns"));
    }

    #[test]
    fn instruction_extraction_off_repeats_header_per_block() {
        let code = builtin_pseudocode(TaskKind::Sm);
        let demo = Demonstration {
            pair: sm_pair("d1"),
            trace: ConditionTrace::new(vec![true]).unwrap(),
            label: false,
            summarized: None,
        };
        let prepared = PreparedDemo::new(demo, &code, vec![], None).unwrap();
        let pair = sm_pair("p1");
        let target = RenderTarget {
            pair: &pair,
            knowledge: &[],
            self_indicator: None,
            summaries: None,
        };
        let opts = RenderOptions {
            shots: 1,
            instruction_extraction: false,
            ..Default::default()
        };
        let bundle = render_prompt(
            &code,
            &target,
            &[prepared],
            &opts,
            "null",
            &TemplateSet::default(),
        )
        .unwrap();
        assert_eq!(bundle.body.matches("Question:\n").count(), 1);
        assert!(bundle.body.starts_with("Question:\n"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let code = builtin_pseudocode(TaskKind::Em);
        let pair = CandidatePair::new(
            "e1",
            Item::Entity(EntityItem::new("MI", vec![("context".into(), "s1".into())]).unwrap()),
            Item::Entity(
                EntityItem::new(
                    "myocardial infarction",
                    vec![("context".into(), "s2".into())],
                )
                .unwrap(),
            ),
            None,
        )
        .unwrap();
        let target = RenderTarget {
            pair: &pair,
            knowledge: &[item("One of heart disease is myocardial infarction")],
            self_indicator: None,
            summaries: None,
        };
        let opts = RenderOptions::default();
        let a = render_prompt(&code, &target, &[], &opts, "eak", &TemplateSet::default()).unwrap();
        let b = render_prompt(&code, &target, &[], &opts, "eak", &TemplateSet::default()).unwrap();
        assert_eq!(a.body, b.body);
        assert!(a.body.contains("Entity A: MI"));
        assert!(a.body.contains("Description of entity A: context: s1"));
    }

    #[test]
    fn summarize_demo_issues_two_calls_and_stores_summaries() {
        let backend = MockBackend::new(vec![
            MockRule::regex("provider-npi", "left summary").unwrap(),
            MockRule::regex("practitioner-identifier", "right summary").unwrap(),
        ]);
        let demo = Demonstration {
            pair: sm_pair("d1"),
            trace: ConditionTrace::new(vec![true]).unwrap(),
            label: false,
            summarized: None,
        };
        let out = summarize_demo(&demo, &backend, &GenerationParams::default(), &TemplateSet::default());
        assert_eq!(
            out.summarized,
            Some(PairSummaries {
                left: "left summary".into(),
                right: "right summary".into(),
            })
        );
    }

    #[test]
    fn summarize_demo_failure_leaves_demo_untouched() {
        let backend = MockBackend::new(vec![]); // matches nothing
        let demo = Demonstration {
            pair: sm_pair("d1"),
            trace: ConditionTrace::new(vec![true]).unwrap(),
            label: false,
            summarized: None,
        };
        let out = summarize_demo(&demo, &backend, &GenerationParams::default(), &TemplateSet::default());
        assert_eq!(out.summarized, None);
    }

    #[test]
    fn summarize_demo_overwrites_deterministically() {
        let backend = MockBackend::new(vec![MockRule::regex(".*", "same summary").unwrap()]);
        let demo = Demonstration {
            pair: sm_pair("d1"),
            trace: ConditionTrace::new(vec![true]).unwrap(),
            label: false,
            summarized: Some(PairSummaries {
                left: "old".into(),
                right: "old".into(),
            }),
        };
        let once = summarize_demo(&demo, &backend, &GenerationParams::default(), &TemplateSet::default());
        let twice = summarize_demo(&once, &backend, &GenerationParams::default(), &TemplateSet::default());
        assert_eq!(once.summarized, twice.summarized);
        assert_eq!(once.summarized.as_ref().unwrap().left, "same summary");
    }

    #[test]
    fn self_indicator_prompt_includes_pair_and_knowledge() {
        let backend = MockBackend::new(vec![MockRule::regex(
            "Schema A: provider-npi",
            "the indicator",
        )
        .unwrap()]);
        let pair = sm_pair("p1");
        let si = extract_self_indicator(
            &pair,
            &[item("provider: provider table")],
            &backend,
            &GenerationParams::default(),
            &TemplateSet::default(),
        )
        .unwrap();
        assert_eq!(si.text, "the indicator");
    }

    #[test]
    fn demonstrations_round_trip_through_jsonl() {
        let demos = vec![Demonstration {
            pair: sm_pair("d1"),
            trace: ConditionTrace::new(vec![false, true]).unwrap(),
            label: false,
            summarized: Some(PairSummaries {
                left: "l".into(),
                right: "r".into(),
            }),
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.jsonl");
        save_demonstrations(&demos, &path).unwrap();
        let loaded = load_demonstrations(&path).unwrap();
        assert_eq!(loaded, demos);
    }
}
