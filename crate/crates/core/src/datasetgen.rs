//! Entity-matching pool construction from entity-linking mentions: mentions
//! sharing a concept contribute their least-similar surface pairs as
//! positives; pairs across concepts are ranked by similarity and the top
//! quota become negatives.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{CandidatePair, EntityItem, Item, MappingPool, ModelError, TaskKind};

/// One recognized entity mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub surface: String,
    pub concept_id: String,
    pub sentence: String,
}

/// Pluggable similarity function id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    #[default]
    TrigramJaccard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub negative_quota: usize,
    pub similarity: SimilarityKind,
    pub seed: u64,
    /// Sample negatives uniformly at random (seeded) instead of taking the
    /// deterministic highest-similarity quota.
    pub random_negatives: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            negative_quota: 0,
            similarity: SimilarityKind::default(),
            seed: 0,
            random_negatives: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetGenError {
    #[error("need at least two mentions, got {0}")]
    TooFewMentions(usize),
    #[error("line {line}: malformed mention ({detail})")]
    Malformed { line: usize, detail: String },
    #[error("mention {index} has an empty {field}")]
    EmptyField { index: usize, field: &'static str },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn trigram_set(text: &str) -> HashSet<Vec<char>> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() < 3 {
        return HashSet::new();
    }
    chars.windows(3).map(|w| w.to_vec()).collect()
}

/// Character-trigram Jaccard similarity over lowercased strings. Equal
/// strings score exactly 1.0; distinct strings always score below 1.0, even
/// in the rare case where they share an identical trigram set.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a = a.to_lowercase();
    let b = b.to_lowercase();
    if a == b {
        return 1.0;
    }
    let ta = trigram_set(&a);
    let tb = trigram_set(&b);
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let intersection = ta.intersection(&tb).count() as f64;
    let union = ta.union(&tb).count() as f64;
    (intersection / union).min(1.0 - f64::EPSILON)
}

fn content_rank(seed: u64, left: &Mention, right: &Mention) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in [&left.surface, &left.sentence, &right.surface, &right.sentence] {
        hasher.update([0x1f]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is long enough"))
}

/// Canonical orientation: lexicographically smaller (surface, sentence) on
/// the left.
fn orient<'a>(a: &'a Mention, b: &'a Mention) -> (&'a Mention, &'a Mention) {
    if (a.surface.as_str(), a.sentence.as_str()) <= (b.surface.as_str(), b.sentence.as_str()) {
        (a, b)
    } else {
        (b, a)
    }
}

fn mention_item(mention: &Mention) -> Result<Item, ModelError> {
    Ok(Item::Entity(EntityItem::new(
        mention.surface.clone(),
        vec![("context".to_string(), mention.sentence.clone())],
    )?))
}

struct RankedPair<'a> {
    sim: f64,
    tie: u64,
    left: &'a Mention,
    right: &'a Mention,
}

impl RankedPair<'_> {
    fn sort_key(&self) -> impl Ord + '_ {
        (
            std::cmp::Reverse(ordered_float_bits(self.sim)),
            self.tie,
            self.left.surface.as_str(),
            self.left.sentence.as_str(),
            self.right.surface.as_str(),
            self.right.sentence.as_str(),
        )
    }
}

/// Monotone bit pattern for non-negative, non-NaN floats.
fn ordered_float_bits(v: f64) -> u64 {
    v.to_bits()
}

fn validate_mentions(mentions: &[Mention]) -> Result<(), DatasetGenError> {
    if mentions.len() < 2 {
        return Err(DatasetGenError::TooFewMentions(mentions.len()));
    }
    for (index, m) in mentions.iter().enumerate() {
        for (field, value) in [
            ("surface", &m.surface),
            ("concept_id", &m.concept_id),
            ("sentence", &m.sentence),
        ] {
            if value.trim().is_empty() {
                return Err(DatasetGenError::EmptyField { index, field });
            }
        }
    }
    Ok(())
}

/// Build an entity-matching pool from mentions.
///
/// Positives: per concept, every mention pair achieving that concept's
/// minimum surface similarity. Negatives: the `negative_quota`
/// highest-similarity inter-concept pairs (deterministic, seeded
/// tie-breaking), or a seeded uniform sample when `random_negatives` is set.
/// Each item carries its sentence as a `context` attribute.
pub fn build_pool(mentions: &[Mention], cfg: &GenConfig) -> Result<MappingPool, DatasetGenError> {
    validate_mentions(mentions)?;

    let mut by_concept: BTreeMap<&str, Vec<&Mention>> = BTreeMap::new();
    for m in mentions {
        by_concept.entry(m.concept_id.as_str()).or_default().push(m);
    }

    // Positives: minimum-similarity mention pair(s) within each concept.
    let mut positives: Vec<(&Mention, &Mention)> = by_concept
        .par_iter()
        .flat_map(|(_, group)| {
            let mut pairs = Vec::new();
            let mut min_sim = f64::INFINITY;
            for i in 0..group.len() {
                for j in (i + 1)..group.len() {
                    let sim = similarity(&group[i].surface, &group[j].surface);
                    if sim < min_sim {
                        min_sim = sim;
                        pairs.clear();
                    }
                    if sim == min_sim {
                        pairs.push(orient(group[i], group[j]));
                    }
                }
            }
            pairs
        })
        .collect();
    positives.sort_by(|a, b| {
        (
            a.0.concept_id.as_str(),
            a.0.surface.as_str(),
            a.0.sentence.as_str(),
            a.1.surface.as_str(),
            a.1.sentence.as_str(),
        )
            .cmp(&(
                b.0.concept_id.as_str(),
                b.0.surface.as_str(),
                b.0.sentence.as_str(),
                b.1.surface.as_str(),
                b.1.sentence.as_str(),
            ))
    });

    // Negatives: inter-concept pairs ranked by similarity.
    let negatives: Vec<(&Mention, &Mention)> = if cfg.random_negatives {
        sample_negatives(mentions, cfg)
    } else {
        let mut candidates: Vec<RankedPair> = (0..mentions.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let mentions = &mentions;
                let seed = cfg.seed;
                ((i + 1)..mentions.len()).filter_map(move |j| {
                    let (a, b) = (&mentions[i], &mentions[j]);
                    if a.concept_id == b.concept_id {
                        return None;
                    }
                    let (left, right) = orient(a, b);
                    Some(RankedPair {
                        sim: similarity(&left.surface, &right.surface),
                        tie: content_rank(seed, left, right),
                        left,
                        right,
                    })
                })
            })
            .collect();
        candidates.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        candidates
            .into_iter()
            .take(cfg.negative_quota)
            .map(|c| (c.left, c.right))
            .collect()
    };

    let mut pairs = Vec::with_capacity(positives.len() + negatives.len());
    for (i, (left, right)) in positives.iter().enumerate() {
        pairs.push(CandidatePair::new(
            format!("pos-{}", i + 1),
            mention_item(left)?,
            mention_item(right)?,
            Some(true),
        )?);
    }
    for (i, (left, right)) in negatives.iter().enumerate() {
        pairs.push(CandidatePair::new(
            format!("neg-{}", i + 1),
            mention_item(left)?,
            mention_item(right)?,
            Some(false),
        )?);
    }
    Ok(MappingPool::new(TaskKind::Em, pairs)?)
}

/// Seeded uniform sample of inter-concept pairs, in enumeration order.
fn sample_negatives<'a>(mentions: &'a [Mention], cfg: &GenConfig) -> Vec<(&'a Mention, &'a Mention)> {
    let mut all: Vec<(&Mention, &Mention)> = Vec::new();
    for i in 0..mentions.len() {
        for j in (i + 1)..mentions.len() {
            if mentions[i].concept_id != mentions[j].concept_id {
                all.push(orient(&mentions[i], &mentions[j]));
            }
        }
    }
    if all.len() <= cfg.negative_quota {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked = rand::seq::index::sample(&mut rng, all.len(), cfg.negative_quota).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i]).collect()
}

/// Load mentions from JSONL (`{"surface", "concept_id", "sentence"}`).
pub fn load_mentions(path: impl AsRef<Path>) -> Result<Vec<Mention>, DatasetGenError> {
    let file = fs::File::open(path.as_ref())?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mention: Mention =
            serde_json::from_str(&line).map_err(|e| DatasetGenError::Malformed {
                line: idx + 1,
                detail: e.to_string(),
            })?;
        out.push(mention);
    }
    Ok(out)
}
