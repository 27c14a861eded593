//! Knowledge-compliant data matching for schema matching (SM) and entity
//! matching (EM) tasks.
//!
//! The pipeline classifies candidate pairs as match / no-match by rendering
//! pseudo-code-guided, knowledge-enhanced prompts for an LLM backend and
//! ensembling one verdict per knowledge source by majority vote. A scripted
//! mock backend makes the whole pipeline deterministic and testable offline.

pub mod datasetgen;
pub mod ensemble;
pub mod eval;
pub mod knowledge;
pub mod llm;
pub mod model;
pub mod prompt;
pub mod pseudocode;

pub use ensemble::{Decision, FormatClass, VoteOutcome};
pub use eval::{FormatAudit, Metrics};
pub use knowledge::{KnowledgeItem, Source, SourceSet, SourceSpec};
pub use llm::{GenerationParams, LlmBackend, LlmResponse, ParsedVerdict};
pub use model::{CandidatePair, EntityItem, Item, MappingPool, SchemaItem, TaskKind, Verdict};
pub use prompt::{Demonstration, PromptBundle, RenderOptions, SelfIndicator};
pub use pseudocode::{ConditionTrace, PseudoCode, ReasoningSteps, Statement};
