//! Encyclopedia knowledge: entity search per keyword, then structured facts
//! (verbalized SPARQL results) and/or free-text page extracts. Extracts
//! longer than 1000 words are compressed through the backend's
//! summarization prompt.

use std::collections::HashMap;

use crate::llm::{GenerationParams, LlmBackend};
use crate::prompt::template::{render, Slot};
use crate::prompt::TemplateSet;

use super::clients::{EntitySearchClient, ExtractClient, FactClient};
use super::{KnowledgeItem, Source};

const MAX_EXTRACT_WORDS: usize = 1000;

/// Which encyclopedia products to fetch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncyclopediaParts {
    pub facts: bool,
    pub extracts: bool,
}

impl EncyclopediaParts {
    pub fn facts_only() -> Self {
        EncyclopediaParts {
            facts: true,
            extracts: false,
        }
    }

    pub fn extracts_only() -> Self {
        EncyclopediaParts {
            facts: false,
            extracts: true,
        }
    }
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn truncate_words(text: &str, limit: usize) -> String {
    text.split_whitespace()
        .take(limit)
        .collect::<Vec<_>>()
        .join(" ")
}

fn summarize_extract(
    extract: &str,
    backend: &dyn LlmBackend,
    params: &GenerationParams,
    templates: &TemplateSet,
) -> String {
    let slots: HashMap<&str, Slot> = [("content", Slot::text(extract))].into_iter().collect();
    let prompt = match render(&templates.retrieval_summarization, &slots) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("summarization template error, truncating instead: {e}");
            return truncate_words(extract, MAX_EXTRACT_WORDS);
        }
    };
    match backend.complete_text(&prompt, params) {
        Ok(resp) => resp.text.trim().to_string(),
        Err(e) => {
            log::warn!("extract summarization failed, truncating instead: {e}");
            truncate_words(extract, MAX_EXTRACT_WORDS)
        }
    }
}

/// Fetch encyclopedia knowledge for the given keywords. Per keyword: a top-1
/// entity search, then one item for the verbalized facts and/or one item for
/// the (possibly summarized) page extract. Search misses skip the keyword.
#[allow(clippy::too_many_arguments)]
pub fn encyclopedia_fetch(
    keywords: &[String],
    search: &dyn EntitySearchClient,
    facts: Option<&dyn FactClient>,
    extracts: Option<&dyn ExtractClient>,
    backend: &dyn LlmBackend,
    params: &GenerationParams,
    templates: &TemplateSet,
    parts: EncyclopediaParts,
) -> Vec<KnowledgeItem> {
    let mut items = Vec::new();
    for keyword in keywords {
        let entity = match search.search_top1(keyword) {
            Ok(Some(e)) => e,
            Ok(None) => continue,
            Err(e) => {
                log::warn!("entity search failed for {keyword:?}, skipping: {e}");
                continue;
            }
        };
        if parts.facts {
            if let Some(fact_client) = facts {
                match fact_client.facts(&entity) {
                    Ok(triples) if !triples.is_empty() => {
                        let text = triples
                            .iter()
                            .map(|t| format!("{}: {} {}", entity.label, t.property, t.value))
                            .collect::<Vec<_>>()
                            .join("\n");
                        items.push(KnowledgeItem {
                            source: Source::Wikidata,
                            text,
                            origin_key: keyword.clone(),
                        });
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!("fact query failed for {keyword:?}: {e}"),
                }
            }
        }
        if parts.extracts {
            if let Some(extract_client) = extracts {
                match extract_client.extract(&entity) {
                    Ok(Some(extract)) if !extract.trim().is_empty() => {
                        let text = if word_count(&extract) > MAX_EXTRACT_WORDS {
                            summarize_extract(&extract, backend, params, templates)
                        } else {
                            extract
                        };
                        items.push(KnowledgeItem {
                            source: Source::Wikipedia,
                            text,
                            origin_key: keyword.clone(),
                        });
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!("extract fetch failed for {keyword:?}: {e}"),
                }
            }
        }
    }
    items
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::clients::{ClientError, EntityRef, FactTriple};
    use crate::llm::{MockBackend, MockRule};

    struct Search(Option<EntityRef>);
    impl EntitySearchClient for Search {
        fn search_top1(&self, _term: &str) -> Result<Option<EntityRef>, ClientError> {
            Ok(self.0.clone())
        }
    }

    struct Facts(Vec<FactTriple>);
    impl FactClient for Facts {
        fn facts(&self, _entity: &EntityRef) -> Result<Vec<FactTriple>, ClientError> {
            Ok(self.0.clone())
        }
    }

    struct Extract(Option<String>);
    impl ExtractClient for Extract {
        fn extract(&self, _entity: &EntityRef) -> Result<Option<String>, ClientError> {
            Ok(self.0.clone())
        }
    }

    fn entity() -> EntityRef {
        EntityRef {
            code: "Q1".into(),
            label: "arteritis".into(),
        }
    }

    fn backend() -> MockBackend {
        MockBackend::new(vec![MockRule::regex(".*", "a short summary").unwrap()])
    }

    #[test]
    fn facts_verbalize_as_label_property_value_lines() {
        let facts = Facts(vec![
            FactTriple {
                property: "subclass of".into(),
                value: "vasculitis".into(),
            },
            FactTriple {
                property: "instance of".into(),
                value: "disease".into(),
            },
        ]);
        let items = encyclopedia_fetch(
            &["arteritis".to_string()],
            &Search(Some(entity())),
            Some(&facts),
            None,
            &backend(),
            &Default::default(),
            &Default::default(),
            EncyclopediaParts::facts_only(),
        );
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].source, Source::Wikidata);
        assert_eq!(
            items[0].text,
            "arteritis: subclass of vasculitis\narteritis: instance of disease"
        );
    }

    #[test]
    fn short_extract_passes_through() {
        let extract = Extract(Some("a 200 word extract, well, shorter".into()));
        let items = encyclopedia_fetch(
            &["arteritis".to_string()],
            &Search(Some(entity())),
            None,
            Some(&extract),
            &backend(),
            &Default::default(),
            &Default::default(),
            EncyclopediaParts::extracts_only(),
        );
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].text, "a 200 word extract, well, shorter");
        assert_eq!(items[0].source, Source::Wikipedia);
    }

    #[test]
    fn long_extract_goes_through_the_summarizer() {
        let long = vec!["word"; 3000].join(" ");
        let extract = Extract(Some(long));
        let items = encyclopedia_fetch(
            &["arteritis".to_string()],
            &Search(Some(entity())),
            None,
            Some(&extract),
            &backend(),
            &Default::default(),
            &Default::default(),
            EncyclopediaParts::extracts_only(),
        );
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].text, "a short summary");
    }

    #[test]
    fn summarizer_failure_falls_back_to_truncation() {
        let long = vec!["word"; 1500].join(" ");
        let extract = Extract(Some(long));
        let failing_backend = MockBackend::new(vec![]); // matches nothing
        let items = encyclopedia_fetch(
            &["arteritis".to_string()],
            &Search(Some(entity())),
            None,
            Some(&extract),
            &failing_backend,
            &Default::default(),
            &Default::default(),
            EncyclopediaParts::extracts_only(),
        );
        assert_eq!(items.len(), 1);
        assert_eq!(word_count(&items[0].text), 1000);
    }

    #[test]
    fn entity_hit_with_nothing_behind_it_yields_no_items() {
        let items = encyclopedia_fetch(
            &["arteritis".to_string()],
            &Search(Some(entity())),
            Some(&Facts(vec![])),
            Some(&Extract(None)),
            &backend(),
            &Default::default(),
            &Default::default(),
            EncyclopediaParts {
                facts: true,
                extracts: true,
            },
        );
        assert!(items.is_empty());
    }

    #[test]
    fn search_miss_skips_keyword() {
        let items = encyclopedia_fetch(
            &["nothing".to_string()],
            &Search(None),
            None,
            Some(&Extract(Some("text".into()))),
            &backend(),
            &Default::default(),
            &Default::default(),
            EncyclopediaParts::extracts_only(),
        );
        assert!(items.is_empty());
    }
}
