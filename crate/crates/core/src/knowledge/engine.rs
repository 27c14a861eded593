//! Source-dispatching retrieval engine: cache-first lookup, per-source
//! builders, and the shared keyword pipeline feeding EaK and the
//! encyclopedia sources.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::llm::{GenerationParams, LlmBackend, LlmError};
use crate::model::{CandidatePair, TaskKind};
use crate::prompt::TemplateSet;

use super::cache::KnowledgeCache;
use super::clients::{EntitySearchClient, ExtractClient, FactClient, TerminologyClient};
use super::encyclopedia::{encyclopedia_fetch, EncyclopediaParts};
use super::keywords::{extract_keywords, filter_keywords};
use super::{dak_lookup, eak_build, DakIndex, KnowledgeError, KnowledgeItem, Source, SourceSpec};

/// Cache hit/build counters for one engine lifetime.
#[derive(Debug, Default)]
pub struct RetrievalStats {
    pub hits: AtomicU64,
    pub built: AtomicU64,
}

impl RetrievalStats {
    pub fn snapshot(&self) -> (u64, u64) {
        (self.hits.load(Ordering::Relaxed), self.built.load(Ordering::Relaxed))
    }
}

pub struct KnowledgeEngine {
    dak_index: Option<DakIndex>,
    terminology: Option<Box<dyn TerminologyClient>>,
    entity_search: Option<Box<dyn EntitySearchClient>>,
    facts: Option<Box<dyn FactClient>>,
    extracts: Option<Box<dyn ExtractClient>>,
    backend: Option<Arc<dyn LlmBackend>>,
    params: GenerationParams,
    templates: Arc<TemplateSet>,
    blacklist: Vec<String>,
    seed: u64,
    max_children: usize,
    cache: KnowledgeCache,
    stats: RetrievalStats,
    keyword_memo: Mutex<HashMap<String, Vec<String>>>,
}

#[derive(Default)]
pub struct KnowledgeEngineBuilder {
    dak_index: Option<DakIndex>,
    terminology: Option<Box<dyn TerminologyClient>>,
    entity_search: Option<Box<dyn EntitySearchClient>>,
    facts: Option<Box<dyn FactClient>>,
    extracts: Option<Box<dyn ExtractClient>>,
    backend: Option<Arc<dyn LlmBackend>>,
    params: Option<GenerationParams>,
    templates: Option<Arc<TemplateSet>>,
    blacklist: Vec<String>,
    seed: u64,
    max_children: Option<usize>,
    cache: Option<KnowledgeCache>,
}

impl KnowledgeEngineBuilder {
    pub fn dak_index(mut self, index: DakIndex) -> Self {
        self.dak_index = Some(index);
        self
    }

    pub fn terminology(mut self, client: Box<dyn TerminologyClient>) -> Self {
        self.terminology = Some(client);
        self
    }

    pub fn entity_search(mut self, client: Box<dyn EntitySearchClient>) -> Self {
        self.entity_search = Some(client);
        self
    }

    pub fn facts(mut self, client: Box<dyn FactClient>) -> Self {
        self.facts = Some(client);
        self
    }

    pub fn extracts(mut self, client: Box<dyn ExtractClient>) -> Self {
        self.extracts = Some(client);
        self
    }

    pub fn backend(mut self, backend: Arc<dyn LlmBackend>) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn params(mut self, params: GenerationParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn templates(mut self, templates: Arc<TemplateSet>) -> Self {
        self.templates = Some(templates);
        self
    }

    pub fn blacklist(mut self, blacklist: Vec<String>) -> Self {
        self.blacklist = blacklist;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn max_children(mut self, max_children: usize) -> Self {
        self.max_children = Some(max_children);
        self
    }

    pub fn cache(mut self, cache: KnowledgeCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn build(self) -> KnowledgeEngine {
        KnowledgeEngine {
            dak_index: self.dak_index,
            terminology: self.terminology,
            entity_search: self.entity_search,
            facts: self.facts,
            extracts: self.extracts,
            backend: self.backend,
            params: self.params.unwrap_or_default(),
            templates: self.templates.unwrap_or_default(),
            blacklist: self.blacklist,
            seed: self.seed,
            max_children: self.max_children.unwrap_or(3),
            cache: self.cache.unwrap_or_else(KnowledgeCache::in_memory),
            stats: RetrievalStats::default(),
            keyword_memo: Mutex::new(HashMap::new()),
        }
    }
}

impl KnowledgeEngine {
    pub fn builder() -> KnowledgeEngineBuilder {
        KnowledgeEngineBuilder::default()
    }

    pub fn stats(&self) -> &RetrievalStats {
        &self.stats
    }

    pub fn save_cache(&self) -> Result<(), KnowledgeError> {
        self.cache.save()
    }

    fn backend(&self) -> Result<&dyn LlmBackend, KnowledgeError> {
        self.backend
            .as_deref()
            .ok_or_else(|| LlmError::NotConfigured("knowledge pretasks need an LLM backend".into()).into())
    }

    /// Extracted-and-filtered keywords for a pair, memoized by content
    /// digest for the engine lifetime.
    pub fn keywords_for(&self, pair: &CandidatePair) -> Result<Vec<String>, KnowledgeError> {
        let digest = pair.content_digest();
        if let Some(cached) = self.keyword_memo.lock().unwrap().get(&digest) {
            return Ok(cached.clone());
        }
        let backend = self.backend()?;
        let raw = extract_keywords(pair, backend, &self.params, &self.templates)?;
        let filtered = filter_keywords(
            &raw,
            backend,
            &self.params,
            &self.blacklist,
            pair.kind(),
            &self.templates,
        )?;
        self.keyword_memo
            .lock()
            .unwrap()
            .insert(digest, filtered.clone());
        Ok(filtered)
    }

    fn build_source(
        &self,
        source: Source,
        pair: &CandidatePair,
    ) -> Result<Vec<KnowledgeItem>, KnowledgeError> {
        match source {
            Source::Null => Ok(Vec::new()),
            Source::Dak => {
                if pair.kind() != TaskKind::Sm {
                    return Err(KnowledgeError::DakNeedsSchemaPool(pair.kind()));
                }
                let index = self
                    .dak_index
                    .as_ref()
                    .ok_or(KnowledgeError::MissingDakIndex)?;
                Ok(dak_lookup(index, pair))
            }
            Source::Eak => {
                let kb = self
                    .terminology
                    .as_deref()
                    .ok_or(KnowledgeError::MissingClient("eak".into(), "terminology"))?;
                let keywords = self.keywords_for(pair)?;
                Ok(eak_build(&keywords, kb, self.max_children, self.seed))
            }
            Source::Wikidata => {
                let search = self.entity_search.as_deref().ok_or(
                    KnowledgeError::MissingClient("wikidata".into(), "entity search"),
                )?;
                let facts = self
                    .facts
                    .as_deref()
                    .ok_or(KnowledgeError::MissingClient("wikidata".into(), "facts"))?;
                let keywords = self.keywords_for(pair)?;
                Ok(encyclopedia_fetch(
                    &keywords,
                    search,
                    Some(facts),
                    None,
                    self.backend()?,
                    &self.params,
                    &self.templates,
                    EncyclopediaParts::facts_only(),
                ))
            }
            Source::Wikipedia => {
                let search = self.entity_search.as_deref().ok_or(
                    KnowledgeError::MissingClient("wikipedia".into(), "entity search"),
                )?;
                let extracts = self
                    .extracts
                    .as_deref()
                    .ok_or(KnowledgeError::MissingClient("wikipedia".into(), "extracts"))?;
                let keywords = self.keywords_for(pair)?;
                Ok(encyclopedia_fetch(
                    &keywords,
                    search,
                    None,
                    Some(extracts),
                    self.backend()?,
                    &self.params,
                    &self.templates,
                    EncyclopediaParts::extracts_only(),
                ))
            }
        }
    }

    /// Retrieve the knowledge list for one configured source, cache-first.
    /// Composite sources concatenate their members' lists in order.
    pub fn retrieve(
        &self,
        pair: &CandidatePair,
        spec: &SourceSpec,
    ) -> Result<Vec<KnowledgeItem>, KnowledgeError> {
        let digest = pair.content_digest();
        let mut out = Vec::new();
        for &member in &spec.members {
            if member == Source::Null {
                continue;
            }
            if let Some(cached) = self.cache.get(member, &digest) {
                self.stats.hits.fetch_add(1, Ordering::Relaxed);
                out.extend(cached);
                continue;
            }
            let items = self.build_source(member, pair)?;
            self.stats.built.fetch_add(1, Ordering::Relaxed);
            self.cache.put(member, &digest, items.clone());
            out.extend(items);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::build_dak_index;
    use crate::knowledge::clients::{ClientError, Concept};
    use crate::llm::{MockBackend, MockRule};
    use crate::model::{Item, MappingPool, SchemaItem};
    use std::sync::atomic::AtomicUsize;

    fn sm_pool() -> MappingPool {
        let pair = |id: &str, l: (&str, &str, &str, &str), r: (&str, &str, &str, &str)| {
            CandidatePair::new(
                id,
                Item::Schema(SchemaItem::new(l.0, l.1, l.2, l.3).unwrap()),
                Item::Schema(SchemaItem::new(r.0, r.1, r.2, r.3).unwrap()),
                None,
            )
            .unwrap()
        };
        MappingPool::new(
            TaskKind::Sm,
            vec![
                pair(
                    "p1",
                    ("provider", "npi", "provider directory", "the npi"),
                    ("clinic", "id", "clinic data", "id"),
                ),
                pair(
                    "p2",
                    ("visit", "code", "provider care visits", "code"),
                    ("stay", "id", "stay records", "id"),
                ),
            ],
        )
        .unwrap()
    }

    struct CountingKb {
        calls: AtomicUsize,
    }

    impl TerminologyClient for CountingKb {
        fn search_top1(&self, _term: &str) -> Result<Option<Concept>, ClientError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(Some(Concept {
                id: "1".into(),
                term: "parent".into(),
            }))
        }
        fn children(&self, _id: &str) -> Result<Vec<Concept>, ClientError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(vec![Concept {
                id: "2".into(),
                term: "child".into(),
            }])
        }
    }

    fn keyword_backend() -> Arc<dyn LlmBackend> {
        Arc::new(MockBackend::new(vec![
            MockRule::regex("extract all the keywords", "npi").unwrap(),
            MockRule::regex("find out which of the given keywords", "npi").unwrap(),
        ]))
    }

    #[test]
    fn null_source_returns_empty() {
        let engine = KnowledgeEngine::builder().build();
        let pool = sm_pool();
        let spec = SourceSpec::parse("null").unwrap();
        assert!(engine.retrieve(&pool.pairs[0], &spec).unwrap().is_empty());
    }

    #[test]
    fn dak_source_uses_the_index() {
        let pool = sm_pool();
        let index = build_dak_index(&pool).unwrap();
        let engine = KnowledgeEngine::builder().dak_index(index).build();
        let spec = SourceSpec::parse("dak").unwrap();
        let items = engine.retrieve(&pool.pairs[0], &spec).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].text, "provider: provider care visits");
    }

    #[test]
    fn dak_without_index_errors() {
        let engine = KnowledgeEngine::builder().build();
        let pool = sm_pool();
        let spec = SourceSpec::parse("dak").unwrap();
        assert!(matches!(
            engine.retrieve(&pool.pairs[0], &spec),
            Err(KnowledgeError::MissingDakIndex)
        ));
    }

    #[test]
    fn cache_hit_skips_client_calls() {
        let pool = sm_pool();
        let kb = CountingKb {
            calls: AtomicUsize::new(0),
        };
        let engine = KnowledgeEngine::builder()
            .terminology(Box::new(kb))
            .backend(keyword_backend())
            .build();
        let spec = SourceSpec::parse("eak").unwrap();
        let first = engine.retrieve(&pool.pairs[0], &spec).unwrap();
        assert_eq!(first.len(), 1);
        assert_eq!(first[0].text, "One of parent is child");
        let (hits_before, built_before) = engine.stats().snapshot();
        assert_eq!((hits_before, built_before), (0, 1));

        let second = engine.retrieve(&pool.pairs[0], &spec).unwrap();
        assert_eq!(second, first);
        let (hits, built) = engine.stats().snapshot();
        assert_eq!((hits, built), (1, 1));
    }

    #[test]
    fn composite_source_concatenates_members() {
        let pool = sm_pool();
        let index = build_dak_index(&pool).unwrap();
        let kb = CountingKb {
            calls: AtomicUsize::new(0),
        };
        let engine = KnowledgeEngine::builder()
            .dak_index(index)
            .terminology(Box::new(kb))
            .backend(keyword_backend())
            .build();
        let spec = SourceSpec::parse("dak+eak").unwrap();
        let items = engine.retrieve(&pool.pairs[0], &spec).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].source, Source::Dak);
        assert_eq!(items[1].source, Source::Eak);
    }

    #[test]
    fn missing_client_is_a_hard_error() {
        let pool = sm_pool();
        let engine = KnowledgeEngine::builder().backend(keyword_backend()).build();
        let spec = SourceSpec::parse("eak").unwrap();
        assert!(matches!(
            engine.retrieve(&pool.pairs[0], &spec),
            Err(KnowledgeError::MissingClient(_, "terminology"))
        ));
    }
}
