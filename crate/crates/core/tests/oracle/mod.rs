//! Shared test support: a deterministic RNG, random event streams, and an
//! independent ledger-replay recount. The recount re-derives every node's
//! counters from the persisted ledger and the final structure alone, so it
//! cross-checks the whole incremental restructuring pipeline.

use std::collections::BTreeMap;

use concept_base::{ConceptBase, TreeId};

/// xorshift64*: small, seedable, reproducible across runs.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed.max(1))
    }

    pub fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

/// A stream of 5..=20 events over a small alphabet, each 1..=8 labels.
/// Small alphabets force shared branches, repeats and stop-shorts, which
/// is exactly what stresses the scans.
pub fn random_stream(rng: &mut Rng) -> Vec<Vec<String>> {
    const ALPHABET: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
    let alphabet_size = 2 + rng.below(5) as usize;
    let event_count = 5 + rng.below(16) as usize;
    (0..event_count)
        .map(|_| {
            let len = 1 + rng.below(8) as usize;
            (0..len).map(|_| ALPHABET[rng.below(alphabet_size as u64) as usize].to_string()).collect()
        })
        .collect()
}

/// Replays every ledger event against the final structure: child edges
/// first, a link jump where the next label matches a linked tree's base.
/// Each node's pos must equal the number of routes visiting it, and its
/// terminated count the number of routes that end there or jump out of it.
pub fn assert_counts_match_ledger_replay(base: &ConceptBase, stream_no: usize) {
    let mut pos: BTreeMap<(TreeId, Vec<String>), u64> = BTreeMap::new();
    let mut term: BTreeMap<(TreeId, Vec<String>), u64> = BTreeMap::new();

    for (event_no, event) in base.ledger().iter().enumerate() {
        let mut tree = base
            .tree_by_base(&event.concepts[0])
            .unwrap_or_else(|| panic!("stream {}: no tree for event {}", stream_no, event_no));
        let mut path = vec![tree.base.label.clone()];
        *pos.entry((tree.id, path.clone())).or_default() += 1;
        for label in &event.concepts[1..] {
            let node = tree.node_at(&path).expect("walked path exists");
            if node.child(label).is_some() {
                path.push(label.clone());
            } else {
                let link = base
                    .link_index()
                    .links()
                    .find(|l| {
                        l.from_tree == tree.id
                            && l.from_path == path
                            && base.tree(l.to_tree).is_some_and(|t| t.base.label == *label)
                    })
                    .unwrap_or_else(|| {
                        panic!(
                            "stream {}: event {} cannot continue with {:?} at {:?}",
                            stream_no, event_no, label, path
                        )
                    });
                *term.entry((tree.id, path.clone())).or_default() += 1;
                tree = base.tree(link.to_tree).expect("link target exists");
                path = vec![tree.base.label.clone()];
            }
            *pos.entry((tree.id, path.clone())).or_default() += 1;
        }
        *term.entry((tree.id, path.clone())).or_default() += 1;
    }

    for t in base.trees() {
        for (path, node) in t.walk() {
            let expected_pos = pos.get(&(t.id, path.clone())).copied().unwrap_or(0);
            let expected_term = term.get(&(t.id, path.clone())).copied().unwrap_or(0);
            assert_eq!(
                node.pos, expected_pos,
                "stream {}: pos mismatch at tree {} path {:?}",
                stream_no, t.id, path
            );
            assert_eq!(
                node.terminated, expected_term,
                "stream {}: terminated mismatch at tree {} path {:?}",
                stream_no, t.id, path
            );
        }
    }
}
