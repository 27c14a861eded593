//! LLM backend abstraction: generation parameters, a scripted deterministic
//! mock, an HTTP chat-completion client, and verdict parsing with
//! badly-formatted detection.

mod http;
mod mock;

pub use http::HttpBackend;
pub use mock::{Matcher, MockBackend, MockRule};

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::hex_string;
use crate::prompt::PromptBundle;

/// Sampling parameters sent with every completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            top_p: 0.1,
            max_tokens: 1024,
            model_id: String::new(),
        }
    }
}

/// A raw completion from some backend.
#[derive(Debug, Clone)]
pub struct LlmResponse {
    pub text: String,
    pub latency: Duration,
    pub backend_id: String,
}

/// Outcome of parsing a completion for its final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedVerdict {
    Yes,
    No,
    /// No unambiguous final yes/no could be found.
    BadlyFormatted,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend {backend}: retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted {
        backend: String,
        attempts: u32,
        last: String,
    },
    #[error("backend {backend}: authentication failed: {detail}")]
    Auth { backend: String, detail: String },
    #[error("backend {backend}: timed out: {detail}")]
    Timeout { backend: String, detail: String },
    #[error("mock script matched no rule for prompt digest {digest}")]
    UnmatchedPrompt { digest: String },
    #[error("mock script: {0}")]
    Script(String),
    #[error("no backend configured: {0}")]
    NotConfigured(String),
}

/// A completion backend. Implementations must be shareable across worker
/// threads.
pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete_text(&self, prompt: &str, params: &GenerationParams)
        -> Result<LlmResponse, LlmError>;
}

/// Run one rendered prompt through a backend.
pub fn complete(
    backend: &dyn LlmBackend,
    prompt: &PromptBundle,
    params: &GenerationParams,
) -> Result<LlmResponse, LlmError> {
    backend.complete_text(&prompt.body, params)
}

/// Hex SHA-256 of a prompt body. Used for mock-script matching and run logs.
pub fn prompt_digest(body: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(body.as_bytes());
    hex_string(&hasher.finalize())
}

static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no|answer)\b").unwrap());

/// Parse a completion into a verdict.
///
/// The candidate is the last standalone `yes`/`no` token in the text. It
/// counts as unambiguous only when it appears after the final `answer` cue or
/// on the final non-empty line; anything else is badly formatted. Prompts end
/// by asking for "a final answer ONLY yes or no", so the terminal token is
/// the contract.
pub fn parse_verdict(response: &LlmResponse) -> ParsedVerdict {
    parse_verdict_text(&response.text)
}

pub fn parse_verdict_text(text: &str) -> ParsedVerdict {
    let mut last_token: Option<(usize, ParsedVerdict)> = None;
    let mut last_cue: Option<usize> = None;
    for m in TOKEN_RE.find_iter(text) {
        if m.as_str().eq_ignore_ascii_case("answer") {
            last_cue = Some(m.end());
        } else if m.as_str().eq_ignore_ascii_case("yes") {
            last_token = Some((m.start(), ParsedVerdict::Yes));
        } else {
            last_token = Some((m.start(), ParsedVerdict::No));
        }
    }
    let Some((pos, verdict)) = last_token else {
        return ParsedVerdict::BadlyFormatted;
    };
    if matches!(last_cue, Some(cue) if cue < pos) {
        return verdict;
    }
    // Fallback: accept a token sitting on the final non-empty line.
    let trimmed_end = text.trim_end();
    let final_line_start = trimmed_end.rfind('\n').map(|i| i + 1).unwrap_or(0);
    if pos >= final_line_start {
        verdict
    } else {
        ParsedVerdict::BadlyFormatted
    }
}
