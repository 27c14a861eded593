//! Knowledge retrieval and construction: the DaK index mined from the
//! candidate pool, EaK parent/child sentences from a terminology KB,
//! encyclopedia facts and extracts, the keyword pipeline feeding them, and a
//! persistent per-source cache.

pub mod cache;
pub mod clients;
mod dak;
mod eak;
mod encyclopedia;
mod engine;
mod keywords;

pub use dak::{build_dak_index, dak_lookup, DakIndex};
pub use eak::eak_build;
pub use encyclopedia::{encyclopedia_fetch, EncyclopediaParts};
pub use engine::{KnowledgeEngine, KnowledgeEngineBuilder, RetrievalStats};
pub use keywords::{
    extract_keywords, filter_keywords, load_blacklist, normalize_keyword, KeywordSet,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmError;
use crate::model::TaskKind;
use crate::prompt::PromptError;

/// An atomic knowledge source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Dak,
    Eak,
    Wikidata,
    Wikipedia,
    /// The no-knowledge source: always yields an empty list.
    Null,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Source::Dak => "dak",
            Source::Eak => "eak",
            Source::Wikidata => "wikidata",
            Source::Wikipedia => "wikipedia",
            Source::Null => "null",
        };
        write!(f, "{name}")
    }
}

impl FromStr for Source {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dak" => Ok(Source::Dak),
            "eak" => Ok(Source::Eak),
            "wikidata" => Ok(Source::Wikidata),
            "wikipedia" => Ok(Source::Wikipedia),
            "null" => Ok(Source::Null),
            other => Err(KnowledgeError::UnknownSource(other.to_string())),
        }
    }
}

/// One configured source: either atomic ("eak") or a composite
/// ("wikipedia+eak") whose member lists are concatenated in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpec {
    pub name: String,
    pub members: Vec<Source>,
}

impl SourceSpec {
    /// Parse a source name, splitting composites on `+`.
    pub fn parse(name: &str) -> Result<Self, KnowledgeError> {
        let normalized = name.trim().to_ascii_lowercase();
        if normalized.is_empty() {
            return Err(KnowledgeError::UnknownSource(String::new()));
        }
        let members = normalized
            .split('+')
            .map(Source::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SourceSpec {
            name: normalized,
            members,
        })
    }
}

/// The ordered list of configured sources for a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSet {
    pub sources: Vec<SourceSpec>,
}

impl SourceSet {
    pub fn new(sources: Vec<SourceSpec>) -> Result<Self, KnowledgeError> {
        if sources.is_empty() {
            return Err(KnowledgeError::EmptySourceSet);
        }
        let mut seen = std::collections::HashSet::new();
        for spec in &sources {
            if !seen.insert(spec.name.as_str()) {
                return Err(KnowledgeError::DuplicateSource(spec.name.clone()));
            }
        }
        Ok(SourceSet { sources })
    }

    pub fn parse(names: &[String]) -> Result<Self, KnowledgeError> {
        let sources = names
            .iter()
            .map(|n| SourceSpec::parse(n))
            .collect::<Result<Vec<_>, _>>()?;
        SourceSet::new(sources)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// One retrieved natural-language knowledge item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub source: Source,
    pub text: String,
    /// The object name or keyword the item was retrieved for.
    pub origin_key: String,
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("unknown knowledge source {0:?}")]
    UnknownSource(String),
    #[error("source set must contain at least one source")]
    EmptySourceSet,
    #[error("duplicate source {0:?} in source set")]
    DuplicateSource(String),
    #[error("DaK requires a schema-matching pool, got {0}")]
    DakNeedsSchemaPool(TaskKind),
    #[error("source {0:?} requires a {1} client but none is configured")]
    MissingClient(String, &'static str),
    #[error("DaK index not built; load the pool into the engine first")]
    MissingDakIndex,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("client error: {0}")]
    Client(#[from] clients::ClientError),
}
