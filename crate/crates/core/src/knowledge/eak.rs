//! Examples-as-Knowledge: explain a concept by phrasing parent/child
//! relations from a terminology KB as example sentences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::clients::TerminologyClient;
use super::{KnowledgeItem, Source};

/// Per-keyword RNG seed so sampling is reproducible regardless of keyword
/// processing order or parallelism.
fn keyword_seed(base_seed: u64, keyword: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base_seed.to_le_bytes());
    hasher.update(keyword.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is long enough"))
}

/// For each keyword: top-1 concept search, fetch its children, sample up to
/// `max_children` of them with a seeded RNG, and emit one sentence per
/// parent/child pair. Search misses skip the keyword; client failures are
/// retried once, then skipped with a warning.
pub fn eak_build(
    keywords: &[String],
    kb: &dyn TerminologyClient,
    max_children: usize,
    seed: u64,
) -> Vec<KnowledgeItem> {
    let mut items = Vec::new();
    for keyword in keywords {
        let concept = match retry(|| kb.search_top1(keyword)) {
            Ok(Some(c)) => c,
            Ok(None) => continue,
            Err(e) => {
                log::warn!("EaK search failed for {keyword:?}, skipping: {e}");
                continue;
            }
        };
        let children = match retry(|| kb.children(&concept.id)) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("EaK children fetch failed for {keyword:?}, skipping: {e}");
                continue;
            }
        };
        if children.is_empty() {
            continue;
        }
        let selected = if children.len() <= max_children {
            (0..children.len()).collect::<Vec<_>>()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(keyword_seed(seed, keyword));
            let mut picked = rand::seq::index::sample(&mut rng, children.len(), max_children)
                .into_vec();
            picked.sort_unstable();
            picked
        };
        for idx in selected {
            items.push(KnowledgeItem {
                source: Source::Eak,
                text: format!("One of {} is {}", concept.term, children[idx].term),
                origin_key: keyword.clone(),
            });
        }
    }
    items
}

fn retry<T>(
    mut call: impl FnMut() -> Result<T, super::clients::ClientError>,
) -> Result<T, super::clients::ClientError> {
    match call() {
        Ok(v) => Ok(v),
        Err(first) => {
            log::debug!("client call failed, retrying once: {first}");
            call()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::clients::{ClientError, Concept};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct FixtureKb {
        parent: Option<Concept>,
        children: Vec<Concept>,
        calls: AtomicUsize,
        fail_first: bool,
    }

    impl FixtureKb {
        fn new(parent: Option<Concept>, children: Vec<Concept>) -> Self {
            FixtureKb {
                parent,
                children,
                calls: AtomicUsize::new(0),
                fail_first: false,
            }
        }
    }

    impl TerminologyClient for FixtureKb {
        fn search_top1(&self, _term: &str) -> Result<Option<Concept>, ClientError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if self.fail_first && n == 0 {
                return Err(ClientError::Http("transient".into()));
            }
            Ok(self.parent.clone())
        }

        fn children(&self, _id: &str) -> Result<Vec<Concept>, ClientError> {
            Ok(self.children.clone())
        }
    }

    fn concept(id: &str, term: &str) -> Concept {
        Concept {
            id: id.into(),
            term: term.into(),
        }
    }

    #[test]
    fn phrases_parent_child_relation() {
        let kb = FixtureKb::new(
            Some(concept("1", "disorder of artery")),
            vec![concept("2", "arteritis")],
        );
        let items = eak_build(&["arteritis".to_string()], &kb, 3, 0);
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].text, "One of disorder of artery is arteritis");
        assert_eq!(items[0].origin_key, "arteritis");
        assert_eq!(items[0].source, Source::Eak);
    }

    #[test]
    fn search_miss_skips_keyword() {
        let kb = FixtureKb::new(None, vec![]);
        assert!(eak_build(&["nothing".to_string()], &kb, 3, 0).is_empty());
    }

    #[test]
    fn no_children_emits_nothing() {
        let kb = FixtureKb::new(Some(concept("1", "leaf concept")), vec![]);
        assert!(eak_build(&["leaf".to_string()], &kb, 3, 0).is_empty());
    }

    #[test]
    fn sampling_is_capped_and_reproducible() {
        let children: Vec<Concept> = (0..5)
            .map(|i| concept(&i.to_string(), &format!("child {i}")))
            .collect();
        let kb = FixtureKb::new(Some(concept("p", "parent")), children.clone());
        let a = eak_build(&["kw".to_string()], &kb, 3, 7);
        let kb2 = FixtureKb::new(Some(concept("p", "parent")), children);
        let b = eak_build(&["kw".to_string()], &kb2, 3, 7);
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_can_sample_differently() {
        let children: Vec<Concept> = (0..30)
            .map(|i| concept(&i.to_string(), &format!("child {i}")))
            .collect();
        let kb = FixtureKb::new(Some(concept("p", "parent")), children);
        let mut distinct = std::collections::HashSet::new();
        for seed in 0..8 {
            let items = eak_build(&["kw".to_string()], &kb, 3, seed);
            distinct.insert(
                items
                    .iter()
                    .map(|i| i.text.clone())
                    .collect::<Vec<_>>()
                    .join("|"),
            );
        }
        assert!(distinct.len() > 1, "seeded sampling should vary across seeds");
    }

    #[test]
    fn transient_failure_is_retried() {
        let mut kb = FixtureKb::new(
            Some(concept("1", "parent")),
            vec![concept("2", "child")],
        );
        kb.fail_first = true;
        let items = eak_build(&["kw".to_string()], &kb, 3, 0);
        assert_eq!(items.len(), 1);
    }
}
