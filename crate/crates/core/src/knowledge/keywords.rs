//! Keyword pipeline: LLM keyword extraction from a pair, LLM quality
//! filtering, and blacklist removal.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::llm::{GenerationParams, LlmBackend};
use crate::model::{render_item, CandidatePair, TaskKind};
use crate::prompt::template::{render, Slot};
use crate::prompt::TemplateSet;

use super::KnowledgeError;

/// Raw and quality-filtered keywords for one pair.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeywordSet {
    pub raw: Vec<String>,
    pub filtered: Vec<String>,
}

/// Lowercase, trim, and collapse internal whitespace.
pub fn normalize_keyword(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Load a blacklist file: one keyword per line, `#` comments allowed.
pub fn load_blacklist(path: impl AsRef<Path>) -> Result<Vec<String>, KnowledgeError> {
    let text = fs::read_to_string(path.as_ref())?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(normalize_keyword)
        .collect())
}

fn keyword_pair_lines(pair: &CandidatePair) -> Vec<String> {
    let (noun_title, desc_label) = match pair.kind() {
        TaskKind::Sm => ("Schema", "Schema description"),
        TaskKind::Em => ("Entity", "Entity description"),
    };
    let mut lines = Vec::with_capacity(4);
    for item in [&pair.left, &pair.right] {
        let (name, desc) = render_item(item);
        lines.push(format!("{noun_title}: {name}"));
        lines.push(format!("{desc_label}: {desc}"));
    }
    lines
}

fn split_comma_list(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let normalized = normalize_keyword(part);
        if !normalized.is_empty() && !out.contains(&normalized) {
            out.push(normalized);
        }
    }
    out
}

/// Ask the backend for the domain keywords of a pair. The response is split
/// on commas, normalized, and deduplicated preserving order.
pub fn extract_keywords(
    pair: &CandidatePair,
    backend: &dyn LlmBackend,
    params: &GenerationParams,
    templates: &TemplateSet,
) -> Result<Vec<String>, KnowledgeError> {
    let template = match pair.kind() {
        TaskKind::Sm => &templates.keyword_extraction_sm,
        TaskKind::Em => &templates.keyword_extraction_em,
    };
    let slots: HashMap<&str, Slot> = [("pair", Slot::list(keyword_pair_lines(pair)))]
        .into_iter()
        .collect();
    let prompt = render(template, &slots).map_err(crate::prompt::PromptError::from)?;
    let response = backend.complete_text(&prompt, params)?;
    Ok(split_comma_list(&response.text))
}

/// Quality-filter raw keywords.
///
/// SM mode sends the whole candidate list in one call and keeps the keywords
/// the response returns; EM mode asks yes/no per keyword. An unparseable
/// response rejects the keyword. Blacklisted keywords are removed afterward
/// by exact match on the normalized form.
pub fn filter_keywords(
    raw: &[String],
    backend: &dyn LlmBackend,
    params: &GenerationParams,
    blacklist: &[String],
    task_kind: TaskKind,
    templates: &TemplateSet,
) -> Result<Vec<String>, KnowledgeError> {
    let mut kept: Vec<String> = match task_kind {
        TaskKind::Sm => {
            if raw.is_empty() {
                Vec::new()
            } else {
                let slots: HashMap<&str, Slot> =
                    [("keywords", Slot::text(raw.join(", ")))].into_iter().collect();
                let prompt = render(&templates.keyword_filter_sm, &slots)
                    .map_err(crate::prompt::PromptError::from)?;
                let response = backend.complete_text(&prompt, params)?;
                let approved = split_comma_list(&response.text);
                raw.iter()
                    .filter(|kw| approved.contains(&normalize_keyword(kw)))
                    .cloned()
                    .collect()
            }
        }
        TaskKind::Em => {
            let mut kept = Vec::new();
            for kw in raw {
                let slots: HashMap<&str, Slot> =
                    [("keyword", Slot::text(kw.clone()))].into_iter().collect();
                let prompt = render(&templates.keyword_filter_em, &slots)
                    .map_err(crate::prompt::PromptError::from)?;
                let response = backend.complete_text(&prompt, params)?;
                let first_token: String = response
                    .text
                    .trim()
                    .chars()
                    .take_while(|c| c.is_ascii_alphabetic())
                    .collect();
                if first_token.eq_ignore_ascii_case("yes") {
                    kept.push(kw.clone());
                }
            }
            kept
        }
    };
    let blocked: Vec<String> = blacklist.iter().map(|b| normalize_keyword(b)).collect();
    kept.retain(|kw| !blocked.contains(&normalize_keyword(kw)));
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockBackend, MockRule};
    use crate::model::{CandidatePair, EntityItem, Item, SchemaItem};

    fn sm_pair() -> CandidatePair {
        CandidatePair::new(
            "p1",
            Item::Schema(
                SchemaItem::new("provider", "npi", "provider table", "the npi").unwrap(),
            ),
            Item::Schema(SchemaItem::new("a", "b", "", "").unwrap()),
            None,
        )
        .unwrap()
    }

    fn em_pair() -> CandidatePair {
        CandidatePair::new(
            "e1",
            Item::Entity(EntityItem::new("arteritis", vec![]).unwrap()),
            Item::Entity(EntityItem::new("vasculitis", vec![]).unwrap()),
            None,
        )
        .unwrap()
    }

    #[test]
    fn normalization_collapses_case_and_whitespace() {
        assert_eq!(normalize_keyword("  National  Provider\tIdentifier "), "national provider identifier");
    }

    #[test]
    fn extraction_splits_and_dedups() {
        let backend = MockBackend::new(vec![MockRule::regex(
            ".*",
            "National Provider Identifier, npi, NPI",
        )
        .unwrap()]);
        let keywords =
            extract_keywords(&sm_pair(), &backend, &Default::default(), &Default::default())
                .unwrap();
        assert_eq!(keywords, vec!["national provider identifier", "npi"]);
    }

    #[test]
    fn empty_response_yields_empty_set() {
        let backend = MockBackend::new(vec![MockRule::regex(".*", "").unwrap()]);
        let keywords =
            extract_keywords(&sm_pair(), &backend, &Default::default(), &Default::default())
                .unwrap();
        assert!(keywords.is_empty());
    }

    #[test]
    fn extraction_prompt_contains_both_sides() {
        let backend = MockBackend::new(vec![MockRule::regex(
            r"(?s)Schema: provider-npi.*Schema: a-b",
            "foreign key, identifier, cpt4",
        )
        .unwrap()]);
        let keywords =
            extract_keywords(&sm_pair(), &backend, &Default::default(), &Default::default())
                .unwrap();
        assert_eq!(keywords.len(), 3);
    }

    #[test]
    fn sm_filter_keeps_approved_keywords_only() {
        let raw = vec![
            "birthday".to_string(),
            "home".to_string(),
            "dcm".to_string(),
            "location".to_string(),
            "primary key".to_string(),
        ];
        let backend =
            MockBackend::new(vec![MockRule::regex(".*", "dcm, primary key").unwrap()]);
        let kept = filter_keywords(
            &raw,
            &backend,
            &Default::default(),
            &[],
            TaskKind::Sm,
            &Default::default(),
        )
        .unwrap();
        assert_eq!(kept, vec!["dcm", "primary key"]);
    }

    #[test]
    fn em_filter_asks_per_keyword() {
        let raw = vec!["deoxynivalenol".to_string(), "leaf".to_string()];
        let backend = MockBackend::new(vec![
            MockRule::regex("deoxynivalenol", "yes").unwrap(),
            MockRule::regex("leaf", "no").unwrap(),
        ]);
        let kept = filter_keywords(
            &raw,
            &backend,
            &Default::default(),
            &[],
            TaskKind::Em,
            &Default::default(),
        )
        .unwrap();
        assert_eq!(kept, vec!["deoxynivalenol"]);
        let _ = em_pair();
    }

    #[test]
    fn unparseable_filter_answer_rejects_keyword() {
        let raw = vec!["term".to_string()];
        let backend = MockBackend::new(vec![MockRule::regex(".*", "maybe?").unwrap()]);
        let kept = filter_keywords(
            &raw,
            &backend,
            &Default::default(),
            &[],
            TaskKind::Em,
            &Default::default(),
        )
        .unwrap();
        assert!(kept.is_empty());
    }

    #[test]
    fn blacklist_removes_exact_normalized_matches() {
        let raw = vec!["id".to_string(), "data model".to_string()];
        let backend = MockBackend::new(vec![MockRule::regex(".*", "id, data model").unwrap()]);
        let kept = filter_keywords(
            &raw,
            &backend,
            &Default::default(),
            &["ID".to_string()],
            TaskKind::Sm,
            &Default::default(),
        )
        .unwrap();
        assert_eq!(kept, vec!["data model"]);
    }

    #[test]
    fn blacklist_file_skips_comments_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blacklist.txt");
        std::fs::write(&path, "# common noise\nid\n\n Data Model \n").unwrap();
        assert_eq!(load_blacklist(&path).unwrap(), vec!["id", "data model"]);
    }
}
