//! Result ensembling: one prompt per knowledge source, majority vote over
//! the parsed verdicts, and format-failure auditing. Ill-formed or
//! undecidable outputs count as negative votes.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{KnowledgeEngine, SourceSet};
use crate::llm::{complete, parse_verdict, prompt_digest, GenerationParams, LlmBackend, ParsedVerdict};
use crate::model::{CandidatePair, Verdict};
use crate::prompt::{
    extract_self_indicator, render_prompt, summarize_pair, PreparedDemo, PromptError,
    RenderOptions, RenderTarget, SummaryStrategy, TemplateSet,
};
use crate::pseudocode::PseudoCode;

/// One source's contribution to a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteOutcome {
    Yes,
    No,
    BadlyFormatted,
    /// The source's backend call failed outright. Counted exactly like a
    /// badly formatted output, but kept distinct in logs.
    Undecided,
}

impl From<ParsedVerdict> for VoteOutcome {
    fn from(v: ParsedVerdict) -> Self {
        match v {
            ParsedVerdict::Yes => VoteOutcome::Yes,
            ParsedVerdict::No => VoteOutcome::No,
            ParsedVerdict::BadlyFormatted => VoteOutcome::BadlyFormatted,
        }
    }
}

/// Formatting outcome of a whole decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatClass {
    /// Every vote parsed cleanly.
    WellFormatted,
    /// Ill-formed votes were present but outvoted.
    Eliminated,
    /// Ill-formed votes carried the final outcome.
    BadlyFormatted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceVote {
    pub source: String,
    pub outcome: VoteOutcome,
}

/// The per-pair ensemble record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub pair_id: String,
    pub votes: Vec<SourceVote>,
    #[serde(rename = "final")]
    pub final_verdict: Verdict,
    pub format_class: FormatClass,
    pub prompt_digests: Vec<String>,
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("cannot vote over an empty vote list")]
    EmptyVotes,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Knowledge(#[from] crate::knowledge::KnowledgeError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: bad run-log record: {detail}")]
    BadLog { line: usize, detail: String },
}

/// Majority-vote a list of outcomes. Ill-formed and undecided votes count
/// as no; a strict majority of yes votes wins, so ties go to no.
pub fn vote(votes: &[VoteOutcome]) -> Result<(Verdict, FormatClass), EnsembleError> {
    if votes.is_empty() {
        return Err(EnsembleError::EmptyVotes);
    }
    let yes = votes.iter().filter(|v| **v == VoteOutcome::Yes).count();
    let final_verdict = if yes * 2 > votes.len() {
        Verdict::Yes
    } else {
        Verdict::No
    };
    let any_ill_formed = votes
        .iter()
        .any(|v| matches!(v, VoteOutcome::BadlyFormatted | VoteOutcome::Undecided));
    let format_class = if !any_ill_formed {
        FormatClass::WellFormatted
    } else if final_verdict == Verdict::Yes {
        // The ill-formed votes counted as no and still lost.
        FormatClass::Eliminated
    } else {
        FormatClass::BadlyFormatted
    };
    Ok((final_verdict, format_class))
}

/// Everything `intge_classify` needs besides the pair itself.
pub struct PipelineContext<'a> {
    pub engine: &'a KnowledgeEngine,
    pub backend: &'a dyn LlmBackend,
    pub params: &'a GenerationParams,
    pub code: &'a PseudoCode,
    /// Prepared demonstrations per source name.
    pub demos: &'a HashMap<String, Vec<PreparedDemo>>,
    pub opts: &'a RenderOptions,
    pub templates: &'a TemplateSet,
}

/// Classify one pair: retrieve knowledge per source, render and run one
/// prompt per source, parse the verdicts, and majority-vote. Transport
/// failures on a source become undecided votes; every branch is recorded.
pub fn intge_classify(
    pair: &CandidatePair,
    source_set: &SourceSet,
    ctx: &PipelineContext<'_>,
) -> Result<Decision, EnsembleError> {
    static EMPTY: Vec<PreparedDemo> = Vec::new();
    let mut votes = Vec::with_capacity(source_set.len());
    let mut digests = Vec::with_capacity(source_set.len());
    for spec in &source_set.sources {
        let knowledge = match ctx.engine.retrieve(pair, spec) {
            Ok(items) => items,
            Err(e) => {
                log::warn!("pair {}: retrieval failed for source {}: {e}", pair.id, spec.name);
                votes.push(SourceVote {
                    source: spec.name.clone(),
                    outcome: VoteOutcome::Undecided,
                });
                digests.push(String::new());
                continue;
            }
        };
        let demos = ctx.demos.get(&spec.name).unwrap_or(&EMPTY);
        let self_indicator = if ctx.opts.self_indicator {
            match extract_self_indicator(pair, &knowledge, ctx.backend, ctx.params, ctx.templates)
            {
                Ok(si) => Some(si),
                Err(e) => {
                    log::warn!("pair {}: self-indicator failed, stub left empty: {e}", pair.id);
                    None
                }
            }
        } else {
            None
        };
        let summaries = if ctx.opts.summary_strategy == SummaryStrategy::All {
            summarize_pair(pair, ctx.backend, ctx.params, ctx.templates)
        } else {
            None
        };
        let target = RenderTarget {
            pair,
            knowledge: &knowledge,
            self_indicator: self_indicator.as_ref(),
            summaries: summaries.as_ref(),
        };
        let bundle = render_prompt(ctx.code, &target, demos, ctx.opts, &spec.name, ctx.templates)?;
        digests.push(prompt_digest(&bundle.body));
        let outcome = match complete(ctx.backend, &bundle, ctx.params) {
            Ok(response) => parse_verdict(&response).into(),
            Err(e) => {
                log::warn!("pair {}: backend failed for source {}: {e}", pair.id, spec.name);
                VoteOutcome::Undecided
            }
        };
        votes.push(SourceVote {
            source: spec.name.clone(),
            outcome,
        });
    }
    let outcomes: Vec<VoteOutcome> = votes.iter().map(|v| v.outcome).collect();
    let (final_verdict, format_class) = vote(&outcomes)?;
    Ok(Decision {
        pair_id: pair.id.clone(),
        votes,
        final_verdict,
        format_class,
        prompt_digests: digests,
    })
}

/// Write decisions as a JSONL run log, sorted by pair id.
pub fn write_run_log(decisions: &[Decision], path: impl AsRef<Path>) -> Result<(), EnsembleError> {
    let mut sorted: Vec<&Decision> = decisions.iter().collect();
    sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let mut out = fs::File::create(path.as_ref())?;
    for decision in sorted {
        writeln!(
            out,
            "{}",
            serde_json::to_string(decision).expect("decision serializes")
        )?;
    }
    Ok(())
}

/// Read a JSONL run log.
pub fn read_run_log(path: impl AsRef<Path>) -> Result<Vec<Decision>, EnsembleError> {
    let file = fs::File::open(path.as_ref())?;
    let mut decisions = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let decision: Decision =
            serde_json::from_str(&line).map_err(|e| EnsembleError::BadLog {
                line: idx + 1,
                detail: e.to_string(),
            })?;
        decisions.push(decision);
    }
    Ok(decisions)
}
