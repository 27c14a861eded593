//! Clients for external knowledge services: a terminology browser
//! (SNOMED-CT style), an entity search API plus SPARQL fact endpoint
//! (Wikidata style), and a page-extract API (Wikipedia style).
//!
//! Every client trait has an HTTP implementation and a fixture-backed replay
//! implementation; a recording wrapper tees live responses into a fixture
//! file so test traffic can be replayed offline.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// A terminology-KB concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub term: String,
}

/// An encyclopedia entity reference: opaque code plus display label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub code: String,
    pub label: String,
}

/// One structured fact about an entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactTriple {
    pub property: String,
    pub value: String,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http error: {0}")]
    Http(String),
    #[error("unexpected response shape: {0}")]
    Protocol(String),
    #[error("no fixture recorded for {client}.{method}({key:?})")]
    FixtureMiss {
        client: String,
        method: String,
        key: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub trait TerminologyClient: Send + Sync {
    /// Top-1 concept search.
    fn search_top1(&self, term: &str) -> Result<Option<Concept>, ClientError>;
    /// Child concepts of a concept.
    fn children(&self, concept_id: &str) -> Result<Vec<Concept>, ClientError>;
}

pub trait EntitySearchClient: Send + Sync {
    fn search_top1(&self, term: &str) -> Result<Option<EntityRef>, ClientError>;
}

pub trait FactClient: Send + Sync {
    fn facts(&self, entity: &EntityRef) -> Result<Vec<FactTriple>, ClientError>;
}

pub trait ExtractClient: Send + Sync {
    fn extract(&self, entity: &EntityRef) -> Result<Option<String>, ClientError>;
}

// ---------------------------------------------------------------------------
// Fixture store: record/replay
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRecord {
    client: String,
    method: String,
    key: String,
    response: serde_json::Value,
}

/// An in-memory map of recorded client responses, loadable from and savable
/// to a JSONL fixture file.
#[derive(Debug, Default)]
pub struct FixtureStore {
    records: Mutex<HashMap<(String, String, String), serde_json::Value>>,
}

impl FixtureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClientError> {
        let file = fs::File::open(path.as_ref())?;
        let store = FixtureStore::new();
        {
            let mut records = store.records.lock().unwrap();
            for line in std::io::BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: FixtureRecord = serde_json::from_str(&line)
                    .map_err(|e| ClientError::Protocol(format!("fixture line: {e}")))?;
                records.insert((record.client, record.method, record.key), record.response);
            }
        }
        Ok(store)
    }

    /// Write all records sorted by key, so fixture files are reproducible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClientError> {
        let records = self.records.lock().unwrap();
        let mut entries: Vec<_> = records.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = fs::File::create(path.as_ref())?;
        for ((client, method, key), response) in entries {
            let record = FixtureRecord {
                client: client.clone(),
                method: method.clone(),
                key: key.clone(),
                response: response.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&record).expect("fixture serializes"))?;
        }
        Ok(())
    }

    pub fn put(&self, client: &str, method: &str, key: &str, response: serde_json::Value) {
        self.records.lock().unwrap().insert(
            (client.to_string(), method.to_string(), key.to_string()),
            response,
        );
    }

    fn get(&self, client: &str, method: &str, key: &str) -> Result<serde_json::Value, ClientError> {
        self.records
            .lock()
            .unwrap()
            .get(&(client.to_string(), method.to_string(), key.to_string()))
            .cloned()
            .ok_or_else(|| ClientError::FixtureMiss {
                client: client.to_string(),
                method: method.to_string(),
                key: key.to_string(),
            })
    }
}

/// Replay clients answering from a shared fixture store.
pub struct ReplayClient<'a> {
    store: &'a FixtureStore,
}

impl<'a> ReplayClient<'a> {
    pub fn new(store: &'a FixtureStore) -> Self {
        ReplayClient { store }
    }
}

impl TerminologyClient for ReplayClient<'_> {
    fn search_top1(&self, term: &str) -> Result<Option<Concept>, ClientError> {
        let value = self.store.get("terminology", "search", term)?;
        serde_json::from_value(value).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    fn children(&self, concept_id: &str) -> Result<Vec<Concept>, ClientError> {
        let value = self.store.get("terminology", "children", concept_id)?;
        serde_json::from_value(value).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

impl EntitySearchClient for ReplayClient<'_> {
    fn search_top1(&self, term: &str) -> Result<Option<EntityRef>, ClientError> {
        let value = self.store.get("entity_search", "search", term)?;
        serde_json::from_value(value).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

impl FactClient for ReplayClient<'_> {
    fn facts(&self, entity: &EntityRef) -> Result<Vec<FactTriple>, ClientError> {
        let value = self.store.get("facts", "query", &entity.code)?;
        serde_json::from_value(value).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

impl ExtractClient for ReplayClient<'_> {
    fn extract(&self, entity: &EntityRef) -> Result<Option<String>, ClientError> {
        let value = self.store.get("extract", "page", &entity.code)?;
        serde_json::from_value(value).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

/// Wraps live clients and records every response into a fixture store.
pub struct RecordingClient<'a, C> {
    inner: C,
    store: &'a FixtureStore,
}

impl<'a, C> RecordingClient<'a, C> {
    pub fn new(inner: C, store: &'a FixtureStore) -> Self {
        RecordingClient { inner, store }
    }
}

impl<C: TerminologyClient> TerminologyClient for RecordingClient<'_, C> {
    fn search_top1(&self, term: &str) -> Result<Option<Concept>, ClientError> {
        let result = self.inner.search_top1(term)?;
        self.store.put(
            "terminology",
            "search",
            term,
            serde_json::to_value(&result).expect("concept serializes"),
        );
        Ok(result)
    }

    fn children(&self, concept_id: &str) -> Result<Vec<Concept>, ClientError> {
        let result = self.inner.children(concept_id)?;
        self.store.put(
            "terminology",
            "children",
            concept_id,
            serde_json::to_value(&result).expect("concepts serialize"),
        );
        Ok(result)
    }
}

impl<C: EntitySearchClient> EntitySearchClient for RecordingClient<'_, C> {
    fn search_top1(&self, term: &str) -> Result<Option<EntityRef>, ClientError> {
        let result = self.inner.search_top1(term)?;
        self.store.put(
            "entity_search",
            "search",
            term,
            serde_json::to_value(&result).expect("entity serializes"),
        );
        Ok(result)
    }
}

impl<C: FactClient> FactClient for RecordingClient<'_, C> {
    fn facts(&self, entity: &EntityRef) -> Result<Vec<FactTriple>, ClientError> {
        let result = self.inner.facts(entity)?;
        self.store.put(
            "facts",
            "query",
            &entity.code,
            serde_json::to_value(&result).expect("facts serialize"),
        );
        Ok(result)
    }
}

impl<C: ExtractClient> ExtractClient for RecordingClient<'_, C> {
    fn extract(&self, entity: &EntityRef) -> Result<Option<String>, ClientError> {
        let result = self.inner.extract(entity)?;
        self.store.put(
            "extract",
            "page",
            &entity.code,
            serde_json::to_value(&result).expect("extract serializes"),
        );
        Ok(result)
    }
}

// ---------------------------------------------------------------------------
// HTTP implementations
// ---------------------------------------------------------------------------

fn http_client(timeout: Duration) -> Result<reqwest::blocking::Client, ClientError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ClientError::Http(e.to_string()))
}

fn get_json(
    client: &reqwest::blocking::Client,
    url: &str,
    query: &[(&str, &str)],
) -> Result<serde_json::Value, ClientError> {
    let resp = client
        .get(url)
        .query(query)
        .header(reqwest::header::ACCEPT, "application/json")
        .send()
        .map_err(|e| ClientError::Http(e.to_string()))?
        .error_for_status()
        .map_err(|e| ClientError::Http(e.to_string()))?;
    resp.json().map_err(|e| ClientError::Protocol(e.to_string()))
}

/// Snowstorm-style terminology browser client.
///
/// Search: `GET {base}/browser/{branch}/descriptions?term=..&active=true&limit=1`
/// Children: `GET {base}/browser/{branch}/concepts/{id}/children?form=inferred`
pub struct HttpTerminologyClient {
    base_url: String,
    branch: String,
    client: reqwest::blocking::Client,
}

impl HttpTerminologyClient {
    pub fn new(
        base_url: impl Into<String>,
        branch: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, ClientError> {
        Ok(HttpTerminologyClient {
            base_url: base_url.into(),
            branch: branch.into(),
            client: http_client(timeout)?,
        })
    }

    fn concept_from_value(value: &serde_json::Value) -> Option<Concept> {
        let id = value
            .get("conceptId")
            .and_then(|v| v.as_str())
            .or_else(|| value.pointer("/concept/conceptId").and_then(|v| v.as_str()))?;
        let term = value
            .pointer("/pt/term")
            .and_then(|v| v.as_str())
            .or_else(|| value.pointer("/concept/pt/term").and_then(|v| v.as_str()))
            .or_else(|| value.get("term").and_then(|v| v.as_str()))?;
        Some(Concept {
            id: id.to_string(),
            term: term.to_string(),
        })
    }
}

impl TerminologyClient for HttpTerminologyClient {
    fn search_top1(&self, term: &str) -> Result<Option<Concept>, ClientError> {
        let url = format!("{}/browser/{}/descriptions", self.base_url, self.branch);
        let value = get_json(&self.client, &url, &[("term", term), ("active", "true"), ("limit", "1")])?;
        let items = value
            .get("items")
            .and_then(|v| v.as_array())
            .ok_or_else(|| ClientError::Protocol("missing items array".into()))?;
        Ok(items.first().and_then(Self::concept_from_value))
    }

    fn children(&self, concept_id: &str) -> Result<Vec<Concept>, ClientError> {
        let url = format!(
            "{}/browser/{}/concepts/{}/children",
            self.base_url, self.branch, concept_id
        );
        let value = get_json(&self.client, &url, &[("form", "inferred")])?;
        let array = value
            .as_array()
            .or_else(|| value.get("items").and_then(|v| v.as_array()))
            .ok_or_else(|| ClientError::Protocol("missing children array".into()))?;
        Ok(array.iter().filter_map(Self::concept_from_value).collect())
    }
}

/// MediaWiki-style entity search (`action=wbsearchentities`).
pub struct HttpEntitySearchClient {
    api_url: String,
    client: reqwest::blocking::Client,
}

impl HttpEntitySearchClient {
    pub fn new(api_url: impl Into<String>, timeout: Duration) -> Result<Self, ClientError> {
        Ok(HttpEntitySearchClient {
            api_url: api_url.into(),
            client: http_client(timeout)?,
        })
    }
}

impl EntitySearchClient for HttpEntitySearchClient {
    fn search_top1(&self, term: &str) -> Result<Option<EntityRef>, ClientError> {
        let value = get_json(
            &self.client,
            &self.api_url,
            &[
                ("action", "wbsearchentities"),
                ("search", term),
                ("language", "en"),
                ("format", "json"),
                ("limit", "1"),
            ],
        )?;
        let hits = value
            .get("search")
            .and_then(|v| v.as_array())
            .ok_or_else(|| ClientError::Protocol("missing search array".into()))?;
        Ok(hits.first().map(|hit| EntityRef {
            code: hit.get("id").and_then(|v| v.as_str()).unwrap_or("").to_string(),
            label: hit
                .get("label")
                .and_then(|v| v.as_str())
                .unwrap_or("")
                .to_string(),
        }))
    }
}

/// SPARQL fact client querying truthy direct claims with English labels.
pub struct HttpFactClient {
    endpoint: String,
    max_facts: usize,
    client: reqwest::blocking::Client,
}

impl HttpFactClient {
    pub fn new(
        endpoint: impl Into<String>,
        max_facts: usize,
        timeout: Duration,
    ) -> Result<Self, ClientError> {
        Ok(HttpFactClient {
            endpoint: endpoint.into(),
            max_facts,
            client: http_client(timeout)?,
        })
    }
}

impl FactClient for HttpFactClient {
    fn facts(&self, entity: &EntityRef) -> Result<Vec<FactTriple>, ClientError> {
        let query = format!(
            "SELECT ?propertyLabel ?valueLabel WHERE {{ wd:{} ?p ?value . ?property wikibase:directClaim ?p . SERVICE wikibase:label {{ bd:serviceParam wikibase:language \"en\". }} }} LIMIT {}",
            entity.code, self.max_facts
        );
        let value = get_json(
            &self.client,
            &self.endpoint,
            &[("format", "json"), ("query", &query)],
        )?;
        let bindings = value
            .pointer("/results/bindings")
            .and_then(|v| v.as_array())
            .ok_or_else(|| ClientError::Protocol("missing bindings".into()))?;
        Ok(bindings
            .iter()
            .filter_map(|b| {
                let property = b.pointer("/propertyLabel/value")?.as_str()?;
                let val = b.pointer("/valueLabel/value")?.as_str()?;
                Some(FactTriple {
                    property: property.to_string(),
                    value: val.to_string(),
                })
            })
            .collect())
    }
}

/// MediaWiki-style plain-text page extract client, queried by page title
/// (the entity label).
pub struct HttpExtractClient {
    api_url: String,
    client: reqwest::blocking::Client,
}

impl HttpExtractClient {
    pub fn new(api_url: impl Into<String>, timeout: Duration) -> Result<Self, ClientError> {
        Ok(HttpExtractClient {
            api_url: api_url.into(),
            client: http_client(timeout)?,
        })
    }
}

impl ExtractClient for HttpExtractClient {
    fn extract(&self, entity: &EntityRef) -> Result<Option<String>, ClientError> {
        let value = get_json(
            &self.client,
            &self.api_url,
            &[
                ("action", "query"),
                ("prop", "extracts"),
                ("explaintext", "1"),
                ("redirects", "1"),
                ("format", "json"),
                ("titles", &entity.label),
            ],
        )?;
        let pages = value
            .pointer("/query/pages")
            .and_then(|v| v.as_object())
            .ok_or_else(|| ClientError::Protocol("missing pages".into()))?;
        for page in pages.values() {
            if let Some(extract) = page.get("extract").and_then(|v| v.as_str()) {
                if !extract.is_empty() {
                    return Ok(Some(extract.to_string()));
                }
            }
        }
        Ok(None)
    }
}

/// Build an empty fixture response for a missed search, used when recording
/// corpora that intentionally include misses.
pub fn record_miss(store: &FixtureStore, client: &str, method: &str, key: &str) {
    store.put(client, method, key, json!(null));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_store_round_trips() {
        let store = FixtureStore::new();
        store.put(
            "terminology",
            "search",
            "arteritis",
            serde_json::to_value(Some(Concept {
                id: "1".into(),
                term: "Arteritis".into(),
            }))
            .unwrap(),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        store.save(&path).unwrap();
        let reloaded = FixtureStore::load(&path).unwrap();
        let client = ReplayClient::new(&reloaded);
        let concept = TerminologyClient::search_top1(&client, "arteritis").unwrap();
        assert_eq!(concept.unwrap().term, "Arteritis");
    }

    #[test]
    fn replay_misses_are_reported() {
        let store = FixtureStore::new();
        let client = ReplayClient::new(&store);
        assert!(matches!(
            TerminologyClient::search_top1(&client, "unknown"),
            Err(ClientError::FixtureMiss { .. })
        ));
    }

    #[test]
    fn recorded_null_replays_as_search_miss() {
        let store = FixtureStore::new();
        record_miss(&store, "terminology", "search", "nothing");
        let client = ReplayClient::new(&store);
        assert_eq!(TerminologyClient::search_top1(&client, "nothing").unwrap(), None);
    }

    #[test]
    fn recording_wrapper_persists_responses() {
        struct Canned;
        impl TerminologyClient for Canned {
            fn search_top1(&self, _term: &str) -> Result<Option<Concept>, ClientError> {
                Ok(Some(Concept {
                    id: "42".into(),
                    term: "thing".into(),
                }))
            }
            fn children(&self, _id: &str) -> Result<Vec<Concept>, ClientError> {
                Ok(vec![])
            }
        }
        let store = FixtureStore::new();
        let recording = RecordingClient::new(Canned, &store);
        recording.search_top1("thing").unwrap();
        let replay = ReplayClient::new(&store);
        assert_eq!(
            TerminologyClient::search_top1(&replay, "thing").unwrap().unwrap().id,
            "42"
        );
    }
}
