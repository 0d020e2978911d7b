//! Keyed links between trees and the entity keysets that govern which
//! links an entity may traverse.
//!
//! A link always targets another tree's base, so base nodes stay directly
//! accessible no matter how the forest is restructured. Keys are opaque
//! integers rendered as `L1`, `L2`, ... and are never reused within one
//! base lifetime.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::tree::TreeId;

/// Unique id of one link within a concept base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkKey(pub u64);

impl fmt::Display for LinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("link endpoint does not exist: {0}")]
    DanglingEndpoint(String),
}

/// A keyed directed edge from a node in one tree to the base of another.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub key: LinkKey,
    pub from_tree: TreeId,
    /// Inclusive label path of the source node within its tree.
    pub from_path: Vec<String>,
    /// Target tree; the edge always lands on its base.
    pub to_tree: TreeId,
    /// Relevance in (0, 1]; decays when unused, refreshes on use.
    pub strength: f64,
    /// positive:negative evidence pair for the linked continuation.
    pub compound: (u64, u64),
    /// Count mass that left the source node across this link. The source
    /// node's termination count includes it; subtracting it back out
    /// recovers the sequences that genuinely ended there.
    pub flow: u64,
    /// group:individual counters (reserved, no semantics yet).
    pub group_individual: Option<(u64, u64)>,
    /// Set on use, cleared by the next decay tick.
    pub used_since_decay: bool,
    /// Base chain of the branch that was detached when this link was cut,
    /// recorded for the re-join containment test.
    pub detached_path: Option<Vec<String>>,
}

/// Primary key -> the set of link keys and start trees one entity may
/// traverse.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityKeyset {
    pub primary: String,
    pub link_keys: BTreeSet<LinkKey>,
    pub start_trees: BTreeSet<TreeId>,
}

/// What [`LinkIndex::grant`] and `revoke` operate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantTarget {
    Key(LinkKey),
    StartTree(TreeId),
}

/// Owns all links and keysets of a concept base. Mutations are serialized
/// with the base's writer; reads are snapshot-consistent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkIndex {
    pub(crate) links: BTreeMap<LinkKey, Link>,
    pub(crate) keysets: BTreeMap<String, EntityKeyset>,
    pub(crate) next_key: u64,
}

impl LinkIndex {
    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    pub fn link(&self, key: LinkKey) -> Option<&Link> {
        self.links.get(&key)
    }

    pub fn keysets(&self) -> impl Iterator<Item = &EntityKeyset> {
        self.keysets.values()
    }

    pub fn keyset(&self, entity: &str) -> Option<&EntityKeyset> {
        self.keysets.get(entity)
    }

    /// Link keys targeting the given tree's base.
    pub fn inbound_links(&self, tree: TreeId) -> BTreeSet<LinkKey> {
        self.links.values().filter(|l| l.to_tree == tree).map(|l| l.key).collect()
    }

    /// Links anchored at nodes of the given tree.
    pub fn outbound_links(&self, tree: TreeId) -> Vec<&Link> {
        self.links.values().filter(|l| l.from_tree == tree).collect()
    }

    /// Installs a link, or reinforces the existing one for the same
    /// (from, to) pair instead of duplicating it.
    pub(crate) fn install(
        &mut self,
        from_tree: TreeId,
        from_path: Vec<String>,
        to_tree: TreeId,
        detached_path: Option<Vec<String>>,
    ) -> (LinkKey, bool) {
        if let Some(existing) = self
            .links
            .values_mut()
            .find(|l| l.from_tree == from_tree && l.from_path == from_path && l.to_tree == to_tree)
        {
            existing.compound.0 += 1;
            existing.used_since_decay = true;
            return (existing.key, false);
        }
        let key = LinkKey(self.next_key);
        self.next_key += 1;
        self.links.insert(
            key,
            Link {
                key,
                from_tree,
                from_path,
                to_tree,
                strength: 1.0,
                compound: (0, 0),
                flow: 0,
                group_individual: None,
                used_since_decay: false,
                detached_path,
            },
        );
        (key, true)
    }

    pub(crate) fn remove_link(&mut self, key: LinkKey) -> Option<Link> {
        let link = self.links.remove(&key)?;
        for ks in self.keysets.values_mut() {
            ks.link_keys.remove(&key);
        }
        Some(link)
    }

    /// Moves a link's anchor. When another link already covers the same
    /// (from, to) pair the two fold into one: counts add, the stronger
    /// strength wins, and every keyset holding the folded key is migrated.
    pub(crate) fn reanchor(&mut self, key: LinkKey, from_tree: TreeId, from_path: Vec<String>) {
        let Some(to_tree) = self.links.get(&key).map(|l| l.to_tree) else { return };
        let existing = self
            .links
            .values()
            .find(|l| {
                l.key != key
                    && l.from_tree == from_tree
                    && l.from_path == from_path
                    && l.to_tree == to_tree
            })
            .map(|l| l.key);
        match existing {
            Some(keep) => {
                let folded = self.links.remove(&key).expect("checked");
                let kept = self.links.get_mut(&keep).expect("checked");
                kept.compound.0 += folded.compound.0;
                kept.compound.1 += folded.compound.1;
                kept.flow += folded.flow;
                kept.strength = kept.strength.max(folded.strength);
                kept.used_since_decay |= folded.used_since_decay;
                for ks in self.keysets.values_mut() {
                    if ks.link_keys.remove(&key) {
                        ks.link_keys.insert(keep);
                    }
                }
            }
            None => {
                let link = self.links.get_mut(&key).expect("checked");
                link.from_tree = from_tree;
                link.from_path = from_path;
            }
        }
    }

    /// Sum of the flow that left the given node across its links.
    pub fn outflow(&self, tree: TreeId, path: &[String]) -> u64 {
        self.links
            .values()
            .filter(|l| l.from_tree == tree && l.from_path == path)
            .map(|l| l.flow)
            .sum()
    }

    /// Entities whose keyset references the tree, either as a start tree or
    /// through a link key targeting it.
    pub fn referencing_entities(&self, tree: TreeId) -> BTreeSet<String> {
        let inbound = self.inbound_links(tree);
        self.keysets
            .values()
            .filter(|ks| {
                ks.start_trees.contains(&tree) || ks.link_keys.iter().any(|k| inbound.contains(k))
            })
            .map(|ks| ks.primary.clone())
            .collect()
    }

    pub(crate) fn grant(&mut self, entity: &str, target: GrantTarget) {
        let ks = self
            .keysets
            .entry(entity.to_string())
            .or_insert_with(|| EntityKeyset { primary: entity.to_string(), ..Default::default() });
        match target {
            GrantTarget::Key(k) => {
                ks.link_keys.insert(k);
            }
            GrantTarget::StartTree(t) => {
                ks.start_trees.insert(t);
            }
        }
    }

    pub(crate) fn revoke(&mut self, entity: &str, target: GrantTarget) {
        if let Some(ks) = self.keysets.get_mut(entity) {
            match target {
                GrantTarget::Key(k) => {
                    ks.link_keys.remove(&k);
                }
                GrantTarget::StartTree(t) => {
                    ks.start_trees.remove(&t);
                }
            }
        }
    }

    /// The entity's traversal capability set; unknown entities get an empty
    /// capability.
    pub fn resolve(&self, entity: &str) -> (BTreeSet<TreeId>, BTreeSet<LinkKey>) {
        match self.keysets.get(entity) {
            Some(ks) => (ks.start_trees.clone(), ks.link_keys.clone()),
            None => Default::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn install_deduplicates_and_reinforces() {
        let mut index = LinkIndex::default();
        let (k1, fresh) = index.install(TreeId(1), vec!["a".into()], TreeId(2), None);
        assert!(fresh);
        assert_eq!(index.link(k1).unwrap().compound, (0, 0));
        let (k2, fresh) = index.install(TreeId(1), vec!["a".into()], TreeId(2), None);
        assert!(!fresh);
        assert_eq!(k1, k2);
        assert_eq!(index.link(k1).unwrap().compound, (1, 0));
        let (_, fresh) = index.install(TreeId(1), vec!["a".into()], TreeId(2), None);
        assert!(!fresh);
        assert_eq!(index.link(k1).unwrap().compound, (2, 0));
    }

    #[test]
    fn keys_are_never_reused() {
        let mut index = LinkIndex::default();
        let (k1, _) = index.install(TreeId(1), vec!["a".into()], TreeId(2), None);
        index.remove_link(k1);
        let (k2, _) = index.install(TreeId(1), vec!["a".into()], TreeId(2), None);
        assert_ne!(k1, k2);
    }

    #[test]
    fn grant_revoke_roundtrip() {
        let mut index = LinkIndex::default();
        let (k, _) = index.install(TreeId(1), vec!["a".into()], TreeId(2), None);
        index.grant("elephant", GrantTarget::Key(k));
        index.grant("elephant", GrantTarget::Key(k));
        index.grant("elephant", GrantTarget::StartTree(TreeId(1)));
        let (trees, keys) = index.resolve("elephant");
        assert_eq!(keys.len(), 1);
        assert_eq!(trees.len(), 1);
        index.revoke("elephant", GrantTarget::Key(k));
        index.revoke("elephant", GrantTarget::StartTree(TreeId(1)));
        assert_eq!(index.resolve("elephant"), Default::default());
        // revoking what an entity lacks is a no-op
        index.revoke("cat", GrantTarget::Key(k));
        assert_eq!(index.resolve("unknown"), Default::default());
    }

    #[test]
    fn removing_a_link_purges_it_from_every_keyset() {
        let mut index = LinkIndex::default();
        let (k1, _) = index.install(TreeId(1), vec!["a".into()], TreeId(2), None);
        let (k2, _) = index.install(TreeId(3), vec!["b".into()], TreeId(1), None);
        index.grant("e", GrantTarget::Key(k1));
        index.grant("e", GrantTarget::Key(k2));
        index.remove_link(k1);
        let (_, keys) = index.resolve("e");
        assert_eq!(keys.into_iter().collect::<Vec<_>>(), vec![k2]);
    }

    #[test]
    fn outflow_sums_per_source_node() {
        let mut index = LinkIndex::default();
        let (k1, _) = index.install(TreeId(1), vec!["a".into()], TreeId(2), None);
        let (k2, _) = index.install(TreeId(1), vec!["a".into()], TreeId(3), None);
        index.links.get_mut(&k1).unwrap().flow = 2;
        index.links.get_mut(&k2).unwrap().flow = 3;
        assert_eq!(index.outflow(TreeId(1), &["a".to_string()]), 5);
        assert_eq!(index.outflow(TreeId(1), &["b".to_string()]), 0);
    }

    #[test]
    fn referencing_entities_covers_start_trees_and_inbound_keys() {
        let mut index = LinkIndex::default();
        let (k, _) = index.install(TreeId(1), vec!["a".into()], TreeId(2), None);
        index.grant("starter", GrantTarget::StartTree(TreeId(2)));
        index.grant("keyed", GrantTarget::Key(k));
        index.grant("other", GrantTarget::StartTree(TreeId(1)));
        let refs = index.referencing_entities(TreeId(2));
        assert!(refs.contains("starter"));
        assert!(refs.contains("keyed"));
        assert!(!refs.contains("other"));
    }
}
