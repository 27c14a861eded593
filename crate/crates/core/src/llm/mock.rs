//! Scripted mock backend. Rules are checked in order and the first match
//! wins; prompts no rule matches are a loud error so test scenarios stay
//! honest.

use std::fs;
use std::io::BufRead;
use std::path::Path;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;

use super::{prompt_digest, GenerationParams, LlmBackend, LlmError, LlmResponse};

/// How a rule decides whether it applies to a prompt.
#[derive(Debug, Clone)]
pub enum Matcher {
    /// Exact hex SHA-256 of the prompt body.
    Digest(String),
    /// Regex over the prompt body.
    Regex(Regex),
}

#[derive(Debug, Clone)]
pub struct MockRule {
    pub matcher: Matcher,
    pub response: String,
}

impl MockRule {
    pub fn digest(digest: impl Into<String>, response: impl Into<String>) -> Self {
        MockRule {
            matcher: Matcher::Digest(digest.into()),
            response: response.into(),
        }
    }

    pub fn regex(pattern: &str, response: impl Into<String>) -> Result<Self, LlmError> {
        Ok(MockRule {
            matcher: Matcher::Regex(
                Regex::new(pattern).map_err(|e| LlmError::Script(e.to_string()))?,
            ),
            response: response.into(),
        })
    }
}

/// Deterministic scripted backend.
pub struct MockBackend {
    id: String,
    rules: Vec<MockRule>,
}

#[derive(Deserialize)]
struct ScriptLine {
    #[serde(default)]
    digest: Option<String>,
    #[serde(default)]
    regex: Option<String>,
    response: String,
}

impl MockBackend {
    pub fn new(rules: Vec<MockRule>) -> Self {
        MockBackend {
            id: "mock".into(),
            rules,
        }
    }

    /// Load a JSONL script: each line `{"digest"|"regex": ..., "response": ...}`.
    pub fn from_script(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let file = fs::File::open(path.as_ref())
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.as_ref().display())))?;
        let mut rules = Vec::new();
        for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LlmError::Script(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine = serde_json::from_str(&line)
                .map_err(|e| LlmError::Script(format!("line {}: {e}", idx + 1)))?;
            let rule = match (parsed.digest, parsed.regex) {
                (Some(d), None) => MockRule::digest(d, parsed.response),
                (None, Some(r)) => MockRule::regex(&r, parsed.response)?,
                _ => {
                    return Err(LlmError::Script(format!(
                        "line {}: rule needs exactly one of digest or regex",
                        idx + 1
                    )))
                }
            };
            rules.push(rule);
        }
        Ok(MockBackend::new(rules))
    }
}

impl LlmBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete_text(
        &self,
        prompt: &str,
        _params: &GenerationParams,
    ) -> Result<LlmResponse, LlmError> {
        let digest = prompt_digest(prompt);
        for rule in &self.rules {
            let hit = match &rule.matcher {
                Matcher::Digest(d) => d == &digest,
                Matcher::Regex(re) => re.is_match(prompt),
            };
            if hit {
                return Ok(LlmResponse {
                    text: rule.response.clone(),
                    latency: Duration::ZERO,
                    backend_id: self.id.clone(),
                });
            }
        }
        Err(LlmError::UnmatchedPrompt { digest })
    }
}
