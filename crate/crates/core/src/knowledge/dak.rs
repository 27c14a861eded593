//! Dataset-as-Knowledge: mine object names and their metadata descriptions
//! from the candidate pool itself.
//!
//! For every pair, the table-name tokens of its two rendered names are the
//! candidate objects. Scanning all other pairs, any table-description
//! segment (the text before the first semicolon of a rendered description)
//! that mentions an object as a whole word becomes metadata for that object.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{render_item, CandidatePair, MappingPool, TaskKind};

use super::{KnowledgeError, KnowledgeItem, Source};

/// Map from lowercase object name to the metadata texts discovered for it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DakIndex {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl DakIndex {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, object: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(&object.to_ascii_lowercase())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.entries.iter()
    }

    fn insert(&mut self, object: String, metadata: String) {
        self.entries.entry(object).or_default().insert(metadata);
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Case-insensitive whole-word containment. Word characters are ASCII
/// alphanumerics plus underscore, so "provider" does not match inside
/// "provider_id" or "providers".
pub(crate) fn contains_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let hay = haystack.to_ascii_lowercase();
    let needle = needle.to_ascii_lowercase();
    let hay_bytes = hay.as_bytes();
    let mut start = 0;
    while let Some(pos) = hay[start..].find(&needle) {
        let begin = start + pos;
        let end = begin + needle.len();
        let left_ok = begin == 0 || !is_word_byte(hay_bytes[begin - 1]);
        let right_ok = end == hay_bytes.len() || !is_word_byte(hay_bytes[end]);
        if left_ok && right_ok {
            return true;
        }
        start = begin + 1;
    }
    false
}

/// The candidate objects of a pair: the table-name tokens (text before the
/// first dash) of both rendered names, lowercased and deduplicated.
fn pair_objects(pair: &CandidatePair) -> Vec<String> {
    let mut out = Vec::new();
    for item in [&pair.left, &pair.right] {
        let (name, _) = render_item(item);
        let token = name.split('-').next().unwrap_or("").trim().to_ascii_lowercase();
        if !token.is_empty() && !out.contains(&token) {
            out.push(token);
        }
    }
    out
}

/// The table-description segments of a pair: for each side, the text before
/// the first semicolon of the rendered description.
fn table_segments(pair: &CandidatePair) -> Vec<String> {
    [&pair.left, &pair.right]
        .into_iter()
        .map(|item| {
            let (_, desc) = render_item(item);
            desc.split(';').next().unwrap_or("").to_string()
        })
        .collect()
}

/// Build the object/metadata index over a schema-matching pool.
pub fn build_dak_index(pool: &MappingPool) -> Result<DakIndex, KnowledgeError> {
    if pool.task_kind != TaskKind::Sm {
        return Err(KnowledgeError::DakNeedsSchemaPool(pool.task_kind));
    }
    let mut index = DakIndex::default();
    for (i, pair) in pool.pairs.iter().enumerate() {
        for object in pair_objects(pair) {
            for (j, other) in pool.pairs.iter().enumerate() {
                if i == j {
                    continue;
                }
                for segment in table_segments(other) {
                    if contains_word(&segment, &object) {
                        index.insert(object.clone(), segment);
                    }
                }
            }
        }
    }
    Ok(index)
}

/// Look up every index entry whose object occurs (whole-word,
/// case-insensitive) in either rendered name of the pair. Items come out in
/// key order, one per metadata text, phrased `"{object}: {metadata}"`.
pub fn dak_lookup(index: &DakIndex, pair: &CandidatePair) -> Vec<KnowledgeItem> {
    let (left_name, _) = render_item(&pair.left);
    let (right_name, _) = render_item(&pair.right);
    let mut items = Vec::new();
    for (object, metadata) in index.entries() {
        if contains_word(&left_name, object) || contains_word(&right_name, object) {
            for text in metadata {
                items.push(KnowledgeItem {
                    source: Source::Dak,
                    text: format!("{object}: {text}"),
                    origin_key: object.clone(),
                });
            }
        }
    }
    items
}
