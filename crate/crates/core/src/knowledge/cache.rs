//! Persistent knowledge cache: one JSONL file per atomic source, keyed by
//! pair-content digest. Concurrent readers share the in-memory map; writes
//! take the exclusive lock. Corrupt lines are skipped on load so the entry
//! is simply rebuilt on the next retrieval.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{KnowledgeError, KnowledgeItem, Source};

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    digest: String,
    items: Vec<KnowledgeItem>,
}

/// Cache of retrieved knowledge lists.
#[derive(Debug)]
pub struct KnowledgeCache {
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<(Source, String), Vec<KnowledgeItem>>>,
}

impl KnowledgeCache {
    /// Purely in-memory cache.
    pub fn in_memory() -> Self {
        KnowledgeCache {
            dir: None,
            entries: RwLock::new(HashMap::new()),
        }
    }

    /// Cache backed by `{dir}/{source}.jsonl` files. Existing files are
    /// loaded eagerly.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut entries = HashMap::new();
        for source in [Source::Dak, Source::Eak, Source::Wikidata, Source::Wikipedia] {
            let path = dir.join(format!("{source}.jsonl"));
            if !path.exists() {
                continue;
            }
            let file = fs::File::open(&path)?;
            for line in std::io::BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(record) => {
                        entries.insert((source, record.digest), record.items);
                    }
                    Err(e) => {
                        log::warn!(
                            "skipping corrupt cache line in {}: {e}",
                            path.display()
                        );
                    }
                }
            }
        }
        Ok(KnowledgeCache {
            dir: Some(dir),
            entries: RwLock::new(entries),
        })
    }

    pub fn get(&self, source: Source, digest: &str) -> Option<Vec<KnowledgeItem>> {
        self.entries
            .read()
            .unwrap()
            .get(&(source, digest.to_string()))
            .cloned()
    }

    pub fn put(&self, source: Source, digest: &str, items: Vec<KnowledgeItem>) {
        self.entries
            .write()
            .unwrap()
            .insert((source, digest.to_string()), items);
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.read().unwrap().is_empty()
    }

    /// Persist every source file, entries sorted by digest, via a temp file
    /// and atomic rename. A no-op for in-memory caches.
    pub fn save(&self) -> Result<(), KnowledgeError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let entries = self.entries.read().unwrap();
        let mut by_source: HashMap<Source, Vec<(&String, &Vec<KnowledgeItem>)>> = HashMap::new();
        for ((source, digest), items) in entries.iter() {
            by_source.entry(*source).or_default().push((digest, items));
        }
        for (source, mut records) in by_source {
            records.sort_by(|a, b| a.0.cmp(b.0));
            let path = dir.join(format!("{source}.jsonl"));
            let tmp = dir.join(format!(".{source}.jsonl.tmp"));
            {
                let mut out = fs::File::create(&tmp)?;
                for (digest, items) in records {
                    let record = CacheRecord {
                        digest: digest.clone(),
                        items: items.clone(),
                    };
                    writeln!(
                        out,
                        "{}",
                        serde_json::to_string(&record).expect("cache record serializes")
                    )?;
                }
            }
            fs::rename(&tmp, &path)?;
        }
        Ok(())
    }
}
