//! Keyset-gated traversal, conjunctive queries, and count-based
//! confidence estimates. All queries are read-only over a snapshot.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::base::ConceptBase;
use crate::links::LinkKey;
use crate::tree::{ConceptNode, TreeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("the set of required labels is empty")]
    EmptyQuery,
    #[error("no node at path {0:?}")]
    PathNotFound(Vec<String>),
}

/// What a traversal or query reached.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryResult {
    /// Maximal label paths, possibly spanning trees via links.
    pub paths: Vec<Vec<String>>,
    /// Trees visited, in id order.
    pub matched_trees: Vec<TreeId>,
    pub confidence: Option<f64>,
}

struct Traversal<'a> {
    base: &'a ConceptBase,
    /// keys the entity holds; crossing a link consumes its key for the
    /// rest of the traversal, which also rules out link cycles
    available: BTreeSet<LinkKey>,
    consumed: BTreeSet<LinkKey>,
    links_at: BTreeMap<(TreeId, Vec<String>), Vec<(LinkKey, TreeId)>>,
    used: Vec<LinkKey>,
    visited_trees: BTreeSet<TreeId>,
    labels_seen: BTreeSet<String>,
    paths: Vec<Vec<String>>,
}

impl<'a> Traversal<'a> {
    fn new(base: &'a ConceptBase, available: BTreeSet<LinkKey>) -> Self {
        let mut links_at: BTreeMap<(TreeId, Vec<String>), Vec<(LinkKey, TreeId)>> = BTreeMap::new();
        for link in base.link_index().links() {
            links_at
                .entry((link.from_tree, link.from_path.clone()))
                .or_default()
                .push((link.key, link.to_tree));
        }
        Traversal {
            base,
            available,
            consumed: BTreeSet::new(),
            links_at,
            used: Vec::new(),
            visited_trees: BTreeSet::new(),
            labels_seen: BTreeSet::new(),
            paths: Vec::new(),
        }
    }

    fn run(&mut self, start: TreeId) {
        let Some(tree) = self.base.tree(start) else { return };
        self.visited_trees.insert(start);
        self.descend(start, &tree.base, vec![tree.base.label.clone()], Vec::new());
    }

    /// `local` is the path within the current tree (link lookups key on
    /// it); `prefix` is everything accumulated before the last jump.
    fn descend(&mut self, tree: TreeId, node: &ConceptNode, local: Vec<String>, prefix: Vec<String>) {
        self.labels_seen.insert(node.label.clone());
        let mut extended = false;
        for child in &node.children {
            extended = true;
            let mut l = local.clone();
            l.push(child.label.clone());
            self.descend(tree, child, l, prefix.clone());
        }
        let crossings: Vec<(LinkKey, TreeId)> = self
            .links_at
            .get(&(tree, local.clone()))
            .map(|v| {
                v.iter()
                    .filter(|(k, _)| self.available.contains(k) && !self.consumed.contains(k))
                    .copied()
                    .collect()
            })
            .unwrap_or_default();
        for (key, target) in crossings {
            if self.consumed.contains(&key) {
                continue;
            }
            let Some(target_tree) = self.base.tree(target) else { continue };
            self.consumed.insert(key);
            self.used.push(key);
            self.visited_trees.insert(target);
            extended = true;
            let mut new_prefix = prefix.clone();
            new_prefix.extend(local.iter().cloned());
            self.descend(
                target,
                &target_tree.base,
                vec![target_tree.base.label.clone()],
                new_prefix,
            );
        }
        if !extended {
            let mut full = prefix;
            full.extend(local);
            self.paths.push(full);
        }
    }
}

/// Depth-first expansion from each of the entity's granted start trees.
/// Crossing a link consumes its key for this traversal. Unknown entities
/// get an empty result. Deterministic: trees in id order, children in
/// insertion order, links in key order.
pub fn traverse(base: &ConceptBase, entity: &str) -> QueryResult {
    let (result, _) = traverse_with_trace(base, entity);
    result
}

/// Like [`traverse`], also returning the link keys the walk used so the
/// caller can refresh their strength.
pub fn traverse_with_trace(base: &ConceptBase, entity: &str) -> (QueryResult, Vec<LinkKey>) {
    let (start_trees, keys) = base.link_index().resolve(entity);
    let mut t = Traversal::new(base, keys);
    for start in start_trees {
        t.run(start);
    }
    (
        QueryResult {
            paths: t.paths,
            matched_trees: t.visited_trees.into_iter().collect(),
            confidence: None,
        },
        t.used,
    )
}

/// Conjunctive query: keeps only the start-tree groupings whose reachable
/// closure under the entity's keys contains every required label. Each
/// grouping is explored with a fresh key allowance, so granting more keys
/// never shrinks the result.
pub fn query_all(
    base: &ConceptBase,
    entity: &str,
    required: &BTreeSet<String>,
) -> Result<QueryResult, QueryError> {
    if required.is_empty() {
        return Err(QueryError::EmptyQuery);
    }
    let (start_trees, keys) = base.link_index().resolve(entity);
    let mut result = QueryResult::default();
    let mut matched = BTreeSet::new();
    for start in start_trees {
        let mut t = Traversal::new(base, keys.clone());
        t.run(start);
        if required.iter().all(|l| t.labels_seen.contains(l)) {
            result.paths.extend(t.paths);
            matched.extend(t.visited_trees);
        }
    }
    result.matched_trees = matched.into_iter().collect();
    Ok(result)
}

/// The share of traversals through the node at `path` that continue into
/// `candidate`: child pos over node pos, or 0 when no such child exists.
/// Together with the terminated share the children sum to 1.
pub fn concept_confidence(
    base: &ConceptBase,
    path: &[String],
    candidate: &str,
) -> Result<f64, QueryError> {
    let node = path
        .first()
        .and_then(|first| base.tree_by_base(first))
        .and_then(|tree| tree.node_at(path))
        .ok_or_else(|| QueryError::PathNotFound(path.to_vec()))?;
    match node.child(candidate) {
        Some(child) => Ok(child.pos as f64 / node.pos as f64),
        None => Ok(0.0),
    }
}
