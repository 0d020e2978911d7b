//! The single-tree data structure and its count discipline: base-first
//! growth, branch matching, termination bookkeeping, detachment.
//!
//! Counts narrow from base to leaves (the triangular rule), and for every
//! node the child counts plus terminations add up exactly to its own
//! count. [`validate`] checks both.

use std::fmt;

use thiserror::Error;

use crate::ingest::SequenceEvent;

/// Stable identifier of one tree within a concept base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreeId(pub u64);

impl fmt::Display for TreeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("sequence does not start at the base label")]
    BaseMismatch,
    #[error("no node at path {0:?}")]
    PathNotFound(Vec<String>),
    #[error("the base node cannot be detached")]
    CannotDetachBase,
}

/// One concept in a tree. `pos` counts sequences that traversed or ended
/// here, `neg` counts evidence that the node is false for some traversals,
/// `terminated` counts sequences that ended exactly here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptNode {
    pub label: String,
    pub pos: u64,
    pub neg: u64,
    pub terminated: u64,
    pub children: Vec<ConceptNode>,
}

impl ConceptNode {
    pub fn new(label: impl Into<String>) -> Self {
        ConceptNode { label: label.into(), pos: 1, neg: 0, terminated: 0, children: Vec::new() }
    }

    pub fn child(&self, label: &str) -> Option<&ConceptNode> {
        self.children.iter().find(|c| c.label == label)
    }

    pub fn child_mut(&mut self, label: &str) -> Option<&mut ConceptNode> {
        self.children.iter_mut().find(|c| c.label == label)
    }

    /// Builds a chain for `labels` where every node has pos 1 and the last
    /// node is a termination point.
    pub fn chain(labels: &[String]) -> Option<ConceptNode> {
        let (first, rest) = labels.split_first()?;
        let mut node = ConceptNode::new(first.clone());
        match ConceptNode::chain(rest) {
            Some(child) => node.children.push(child),
            None => node.terminated = 1,
        }
        Some(node)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(ConceptNode::node_count).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(ConceptNode::depth).max().unwrap_or(0)
    }

    /// Longest single-child chain starting at this node, inclusive.
    pub(crate) fn spine(&self) -> Vec<String> {
        let mut labels = vec![self.label.clone()];
        let mut cur = self;
        while cur.children.len() == 1 {
            cur = &cur.children[0];
            labels.push(cur.label.clone());
        }
        labels
    }

    /// The labels of this subtree if it is a pure chain, else None.
    pub(crate) fn closed_chain(&self) -> Option<Vec<String>> {
        let mut labels = vec![self.label.clone()];
        let mut cur = self;
        loop {
            match cur.children.len() {
                0 => return Some(labels),
                1 => {
                    cur = &cur.children[0];
                    labels.push(cur.label.clone());
                }
                _ => return None,
            }
        }
    }

    /// Adds `amount` of negative evidence to every node of this subtree.
    pub(crate) fn seed_neg(&mut self, amount: u64) {
        if amount == 0 {
            return;
        }
        self.neg += amount;
        for c in &mut self.children {
            c.seed_neg(amount);
        }
    }

    pub(crate) fn reset_neg(&mut self) {
        self.neg = 0;
        for c in &mut self.children {
            c.reset_neg();
        }
    }

    fn neg_increment_descendants(&mut self) {
        for c in &mut self.children {
            c.neg += 1;
            c.neg_increment_descendants();
        }
    }

    /// Merges `source` into this node: counts add up and child subtrees are
    /// matched by label, with unmatched ones attached in insertion order.
    ///
    /// Returns one record per newly attached subtree: its inclusive path
    /// (starting at this node's label) and the terminations its attach
    /// parent held before the merge. Callers decide how much of that prior
    /// termination mass counts as negative evidence against the new
    /// content.
    pub(crate) fn merge(&mut self, source: ConceptNode) -> Vec<(Vec<String>, u64)> {
        let mut records = Vec::new();
        let mut path = vec![self.label.clone()];
        self.merge_inner(source, &mut path, &mut records);
        records
    }

    fn merge_inner(
        &mut self,
        source: ConceptNode,
        path: &mut Vec<String>,
        records: &mut Vec<(Vec<String>, u64)>,
    ) {
        debug_assert_eq!(self.label, source.label);
        let prior_terminated = self.terminated;
        self.pos += source.pos;
        self.neg += source.neg;
        self.terminated += source.terminated;
        for child in source.children {
            match self.child_mut(&child.label) {
                Some(target) => {
                    path.push(child.label.clone());
                    target.merge_inner(child, path, records);
                    path.pop();
                }
                None => {
                    let mut p = path.clone();
                    p.push(child.label.clone());
                    records.push((p, prior_terminated));
                    self.children.push(child);
                }
            }
        }
    }
}

/// A rooted counted tree with a stable identifier. The base holds the
/// largest count of the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptTree {
    pub id: TreeId,
    pub base: ConceptNode,
}

/// What [`add_from_base`] did to the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddOutcome {
    /// Number of leading concepts matched against existing nodes (>= 1).
    pub matched_depth: usize,
    /// Whether new nodes were created.
    pub extended: bool,
    /// Whether the sequence ended at a node that has children.
    pub terminated_short: bool,
    /// Path of the node the new branch hangs off, when one was created.
    pub branch_created_at: Option<Vec<String>>,
}

impl ConceptTree {
    /// Builds a fresh tree from a whole sequence: a chain of nodes with
    /// pos 1 terminated at the end.
    pub fn from_sequence(id: TreeId, concepts: &[String]) -> Option<ConceptTree> {
        Some(ConceptTree { id, base: ConceptNode::chain(concepts)? })
    }

    /// Resolves an inclusive label path (starting at the base label).
    pub fn node_at(&self, path: &[String]) -> Option<&ConceptNode> {
        let (first, rest) = path.split_first()?;
        if *first != self.base.label {
            return None;
        }
        let mut cur = &self.base;
        for label in rest {
            cur = cur.child(label)?;
        }
        Some(cur)
    }

    pub fn node_at_mut(&mut self, path: &[String]) -> Option<&mut ConceptNode> {
        let (first, rest) = path.split_first()?;
        if *first != self.base.label {
            return None;
        }
        let mut cur = &mut self.base;
        for label in rest {
            cur = cur.child_mut(label)?;
        }
        Some(cur)
    }

    pub fn node_count(&self) -> usize {
        self.base.node_count()
    }

    /// Preorder iteration as (inclusive path, node) pairs.
    pub fn walk(&self) -> Vec<(Vec<String>, &ConceptNode)> {
        let mut out = Vec::new();
        let mut stack = vec![(vec![self.base.label.clone()], &self.base)];
        while let Some((path, node)) = stack.pop() {
            out.push((path.clone(), node));
            for child in node.children.iter().rev() {
                let mut p = path.clone();
                p.push(child.label.clone());
                stack.push((p, child));
            }
        }
        out
    }
}

/// Greedy walk from the base: returns the deepest matched node path and the
/// matched length. Length 0 when the first concept is not the base label.
pub fn match_prefix(tree: &ConceptTree, concepts: &[String]) -> (Vec<String>, usize) {
    match concepts.first() {
        Some(first) if *first == tree.base.label => {}
        _ => return (Vec::new(), 0),
    }
    let mut path = vec![tree.base.label.clone()];
    let mut cur = &tree.base;
    let mut matched = 1;
    for label in &concepts[1..] {
        match cur.child(label) {
            Some(child) => {
                cur = child;
                path.push(label.clone());
                matched += 1;
            }
            None => break,
        }
    }
    (path, matched)
}

/// Reinforces the tree with a sequence that starts at its base.
///
/// Every matched node gains a positive count. The first mismatch below a
/// matched node creates a fresh chain for the remaining concepts. A
/// sequence that runs out at an internal node counts as a termination
/// there, and every strict descendant gains negative evidence.
pub fn add_from_base(tree: &mut ConceptTree, event: &SequenceEvent) -> Result<AddOutcome, TreeError> {
    if event.concepts.first() != Some(&tree.base.label) {
        return Err(TreeError::BaseMismatch);
    }
    let mut cur = &mut tree.base;
    cur.pos += 1;
    let mut path = vec![cur.label.clone()];
    let mut idx = 1;
    while idx < event.concepts.len() {
        let label = &event.concepts[idx];
        if cur.child(label).is_some() {
            cur = cur.child_mut(label).unwrap();
            cur.pos += 1;
            path.push(label.clone());
            idx += 1;
        } else {
            let chain = ConceptNode::chain(&event.concepts[idx..]).expect("non-empty remainder");
            cur.children.push(chain);
            return Ok(AddOutcome {
                matched_depth: idx,
                extended: true,
                terminated_short: false,
                branch_created_at: Some(path),
            });
        }
    }
    cur.terminated += 1;
    let short = !cur.children.is_empty();
    if short {
        cur.neg_increment_descendants();
    }
    Ok(AddOutcome {
        matched_depth: event.concepts.len(),
        extended: false,
        terminated_short: short,
        branch_created_at: None,
    })
}

/// Removes the subtree at `path` and returns it as a new tree with the
/// given id. Every ancestor loses the detached root's pos; ancestor
/// terminations are untouched, so the node-sum rule keeps holding on both
/// sides.
pub fn detach_branch(
    tree: &mut ConceptTree,
    path: &[String],
    new_id: TreeId,
) -> Result<ConceptTree, TreeError> {
    if path.len() < 2 {
        return if path.len() == 1 && path[0] == tree.base.label {
            Err(TreeError::CannotDetachBase)
        } else {
            Err(TreeError::PathNotFound(path.to_vec()))
        };
    }
    if tree.node_at(path).is_none() {
        return Err(TreeError::PathNotFound(path.to_vec()));
    }
    let detached_pos = tree.node_at(path).unwrap().pos;
    // every proper prefix of the path is an ancestor
    let mut cur = &mut tree.base;
    cur.pos -= detached_pos;
    for label in &path[1..path.len() - 1] {
        cur = cur.child_mut(label).unwrap();
        cur.pos -= detached_pos;
    }
    let idx = cur.children.iter().position(|c| c.label == path[path.len() - 1]).unwrap();
    let detached = cur.children.remove(idx);
    Ok(ConceptTree { id: new_id, base: detached })
}

/// Removes the subtree at `path`, folding its outflow into the parent's
/// termination count so ancestor counts stay intact. Used by the scan
/// pipeline, where the removed branch keeps being reachable via a link.
pub(crate) fn cut_absorbing(tree: &mut ConceptTree, path: &[String]) -> Result<ConceptNode, TreeError> {
    if path.len() < 2 {
        return if path.len() == 1 && path[0] == tree.base.label {
            Err(TreeError::CannotDetachBase)
        } else {
            Err(TreeError::PathNotFound(path.to_vec()))
        };
    }
    let parent = tree
        .node_at_mut(&path[..path.len() - 1])
        .ok_or_else(|| TreeError::PathNotFound(path.to_vec()))?;
    let idx = parent
        .children
        .iter()
        .position(|c| c.label == path[path.len() - 1])
        .ok_or_else(|| TreeError::PathNotFound(path.to_vec()))?;
    let detached = parent.children.remove(idx);
    parent.terminated += detached.pos;
    Ok(detached)
}

/// Re-attaches a subtree under `parent_path`, reversing [`detach_branch`]:
/// ancestors regain the subtree root's pos.
pub fn reattach_branch(
    tree: &mut ConceptTree,
    parent_path: &[String],
    subtree: ConceptNode,
) -> Result<(), TreeError> {
    if tree.node_at(parent_path).is_none() {
        return Err(TreeError::PathNotFound(parent_path.to_vec()));
    }
    let gained = subtree.pos;
    let mut cur = &mut tree.base;
    cur.pos += gained;
    for label in &parent_path[1..] {
        cur = cur.child_mut(label).unwrap();
        cur.pos += gained;
    }
    match cur.child_mut(&subtree.label) {
        Some(existing) => {
            existing.merge(subtree);
        }
        None => cur.children.push(subtree),
    }
    Ok(())
}

/// A broken invariant found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: Vec<String>,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// pos must be >= 1 in a live tree.
    ZeroPos,
    /// child counts plus terminations must equal the node's own count.
    SumMismatch { pos: u64, child_sum: u64, terminated: u64 },
    /// a child's count exceeds its parent's (triangular rule).
    TriangularViolation { parent_pos: u64, child_pos: u64 },
    /// sibling labels must be unique.
    DuplicateSibling(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = self.path.join("/");
        match &self.kind {
            ViolationKind::ZeroPos => write!(f, "{}: pos is 0", path),
            ViolationKind::SumMismatch { pos, child_sum, terminated } => write!(
                f,
                "{}: child sum {} + terminated {} != pos {}",
                path, child_sum, terminated, pos
            ),
            ViolationKind::TriangularViolation { parent_pos, child_pos } => {
                write!(f, "{}: child pos {} exceeds parent pos {}", path, child_pos, parent_pos)
            }
            ViolationKind::DuplicateSibling(label) => {
                write!(f, "{}: duplicate sibling label {:?}", path, label)
            }
        }
    }
}

/// Checks every tree invariant and reports each violation with the node
/// path that breaks it. An empty result means the tree is sound.
pub fn validate(tree: &ConceptTree) -> Vec<Violation> {
    let mut out = Vec::new();
    validate_node(&tree.base, &mut vec![tree.base.label.clone()], &mut out);
    out
}

fn validate_node(node: &ConceptNode, path: &mut Vec<String>, out: &mut Vec<Violation>) {
    if node.pos == 0 {
        out.push(Violation { path: path.clone(), kind: ViolationKind::ZeroPos });
    }
    let child_sum: u64 = node.children.iter().map(|c| c.pos).sum();
    if child_sum + node.terminated != node.pos {
        out.push(Violation {
            path: path.clone(),
            kind: ViolationKind::SumMismatch {
                pos: node.pos,
                child_sum,
                terminated: node.terminated,
            },
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for child in &node.children {
        if !seen.insert(child.label.as_str()) {
            out.push(Violation {
                path: path.clone(),
                kind: ViolationKind::DuplicateSibling(child.label.clone()),
            });
        }
        if child.pos > node.pos {
            let mut p = path.clone();
            p.push(child.label.clone());
            out.push(Violation {
                path: p,
                kind: ViolationKind::TriangularViolation {
                    parent_pos: node.pos,
                    child_pos: child.pos,
                },
            });
        }
        path.push(child.label.clone());
        validate_node(child, path, out);
        path.pop();
    }
}
