//! The forest manager: routes events to trees, factors shared branches
//! into linked trees, splits branches that turn out false, re-joins trees
//! when the evidence allows it, and decays unused links.
//!
//! All mutating operations go through one `&mut ConceptBase`; readers can
//! share snapshots freely. After every public operation all trees satisfy
//! the count invariants (checked by `violations`).

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::config::BaseConfig;
use crate::ingest::{valid_label, SequenceEvent};
use crate::links::{GrantTarget, Link, LinkError, LinkIndex, LinkKey};
use crate::tree::{self, ConceptNode, ConceptTree, TreeId, Violation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaseError {
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("unknown tree {0}")]
    UnknownTree(TreeId),
    #[error("tree {0} is not linked to tree {1} and shares no branch with it")]
    NotLinked(TreeId, TreeId),
    #[error("unknown link key {0}")]
    UnknownKey(LinkKey),
    #[error("a tree based at {0:?} already exists")]
    BaseTaken(String),
    #[error("tree is invalid: {0}")]
    InvalidTree(String),
}

/// Everything one operation changed, in the order it happened.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RestructureReport {
    pub created: Vec<TreeId>,
    pub pruned: Vec<(TreeId, Vec<String>)>,
    pub links_added: Vec<LinkKey>,
    pub links_removed: Vec<LinkKey>,
    pub splits: Vec<(TreeId, Vec<String>)>,
    pub rejoins: Vec<(TreeId, TreeId)>,
    pub refusals: Vec<(TreeId, TreeId, String)>,
}

impl RestructureReport {
    pub fn is_noop(&self) -> bool {
        self.created.is_empty()
            && self.pruned.is_empty()
            && self.links_added.is_empty()
            && self.links_removed.is_empty()
            && self.splits.is_empty()
            && self.rejoins.is_empty()
            && self.refusals.is_empty()
    }

    pub fn merge(&mut self, other: RestructureReport) {
        self.created.extend(other.created);
        self.pruned.extend(other.pruned);
        self.links_added.extend(other.links_added);
        self.links_removed.extend(other.links_removed);
        self.splits.extend(other.splits);
        self.rejoins.extend(other.rejoins);
        self.refusals.extend(other.refusals);
    }
}

impl fmt::Display for RestructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_noop() {
            return writeln!(f, "no changes");
        }
        for id in &self.created {
            writeln!(f, "created tree {}", id)?;
        }
        for (id, path) in &self.pruned {
            writeln!(f, "pruned {} from tree {}", path.join("/"), id)?;
        }
        for key in &self.links_added {
            writeln!(f, "added link {}", key)?;
        }
        for key in &self.links_removed {
            writeln!(f, "removed link {}", key)?;
        }
        for (id, path) in &self.splits {
            writeln!(f, "split {} out of tree {}", path.join("/"), id)?;
        }
        for (a, b) in &self.rejoins {
            writeln!(f, "re-joined tree {} into tree {}", b, a)?;
        }
        for (a, b, reason) in &self.refusals {
            writeln!(f, "refused to re-join tree {} into tree {}: {}", b, a, reason)?;
        }
        Ok(())
    }
}

/// The whole storage system: a forest of counted trees plus links,
/// keysets, the append-only event ledger, and the scan configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBase {
    pub(crate) trees: std::collections::BTreeMap<TreeId, ConceptTree>,
    pub(crate) base_index: std::collections::BTreeMap<String, TreeId>,
    pub(crate) links: LinkIndex,
    pub(crate) ledger: Vec<SequenceEvent>,
    pub(crate) config: BaseConfig,
    pub(crate) clock: u64,
    pub(crate) next_tree_id: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CutKind {
    Factor,
    Split,
}

impl Default for ConceptBase {
    fn default() -> Self {
        ConceptBase::new(BaseConfig::default())
    }
}

impl ConceptBase {
    pub fn new(config: BaseConfig) -> Self {
        ConceptBase {
            trees: Default::default(),
            base_index: Default::default(),
            links: LinkIndex::default(),
            ledger: Vec::new(),
            config,
            clock: 0,
            next_tree_id: 1,
        }
    }

    pub fn config(&self) -> &BaseConfig {
        &self.config
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn trees(&self) -> impl Iterator<Item = &ConceptTree> {
        self.trees.values()
    }

    pub fn tree(&self, id: TreeId) -> Option<&ConceptTree> {
        self.trees.get(&id)
    }

    /// The tree whose base carries this label, if any. Base labels are
    /// unique across the forest.
    pub fn tree_by_base(&self, label: &str) -> Option<&ConceptTree> {
        self.base_index.get(label).and_then(|id| self.trees.get(id))
    }

    pub fn link_index(&self) -> &LinkIndex {
        &self.links
    }

    pub fn ledger(&self) -> &[SequenceEvent] {
        &self.ledger
    }

    fn alloc_tree_id(&mut self) -> TreeId {
        let id = TreeId(self.next_tree_id);
        self.next_tree_id += 1;
        id
    }

    fn check_event(&self, event: &SequenceEvent) -> Result<(), BaseError> {
        if event.concepts.is_empty() {
            return Err(BaseError::InvalidEvent("no concepts".into()));
        }
        for c in &event.concepts {
            if !valid_label(c) {
                return Err(BaseError::InvalidEvent(format!("bad label {:?}", c)));
            }
        }
        if let Some(e) = &event.entity {
            if e.is_empty() || e.contains('/') || e.chars().any(|c| c.is_whitespace() || c.is_control()) {
                return Err(BaseError::InvalidEvent(format!("bad entity {:?}", e)));
            }
        }
        if event.timestamp < self.clock {
            return Err(BaseError::InvalidEvent(format!(
                "timestamp {} is before the session clock {}",
                event.timestamp, self.clock
            )));
        }
        Ok(())
    }

    /// Stores one event: reinforces the tree whose base matches the first
    /// concept or starts a new tree, appends to the ledger, runs the scans
    /// (when eager) and updates the entity's keyset.
    ///
    /// A sequence whose base matches an internal node of some other tree is
    /// never grafted there; it becomes a tree of its own and the factor
    /// scan links the shared content instead.
    pub fn ingest(&mut self, event: SequenceEvent) -> Result<RestructureReport, BaseError> {
        self.check_event(&event)?;
        self.clock = event.timestamp;
        let mut report = RestructureReport::default();
        let first = event.concepts[0].clone();
        let entry_tree = match self.base_index.get(&first).copied() {
            Some(tid) => {
                let t = self.trees.get_mut(&tid).expect("indexed tree exists");
                let outcome = tree::add_from_base(t, &event).expect("routed by base label");
                if let Some(parent_path) = outcome.branch_created_at {
                    // sequences that genuinely ended at the attach point are
                    // evidence against the new continuation
                    let prior = t
                        .node_at(&parent_path)
                        .map(|n| n.terminated)
                        .expect("attach parent exists");
                    let mut child_path = parent_path;
                    child_path.push(event.concepts[outcome.matched_depth].clone());
                    self.seed_attachments(tid, vec![(child_path, prior)]);
                }
                tid
            }
            None => {
                let tid = self.alloc_tree_id();
                let t = ConceptTree::from_sequence(tid, &event.concepts).expect("non-empty");
                self.base_index.insert(first, tid);
                self.trees.insert(tid, t);
                report.created.push(tid);
                tid
            }
        };
        if let Some(entity) = event.entity.clone() {
            self.links.grant(&entity, GrantTarget::StartTree(entry_tree));
        }
        self.ledger.push(event);
        if self.config.eager_scans {
            report.merge(self.factor_scan());
            report.merge(self.falsity_scan());
        }
        Ok(report)
    }

    /// Runs both scans once, for batch-mode callers.
    pub fn run_scans(&mut self) -> RestructureReport {
        let mut report = self.factor_scan();
        report.merge(self.falsity_scan());
        report
    }

    /// Normalizes the forest: content duplicated across trees is stored in
    /// one place and referenced by links.
    ///
    /// Two rules run until nothing fires. First, any non-base node whose
    /// label is some tree's base label is cut out and merged into that
    /// tree. Second, a complete leaf-ward branch shared by at least
    /// `min_share` distinct trees seeds a new tree from its first
    /// occurrence, after which the first rule sweeps up the rest. Longest
    /// shared path wins; ties go to the lexicographically smaller one.
    pub fn factor_scan(&mut self) -> RestructureReport {
        let mut report = RestructureReport::default();
        loop {
            if let Some((tid, path)) = self.find_dedup_cut() {
                self.cut_and_merge(tid, path, CutKind::Factor, &mut report);
                continue;
            }
            if let Some((tid, path)) = self.find_shared_branch() {
                self.cut_and_merge(tid, path, CutKind::Factor, &mut report);
                continue;
            }
            break;
        }
        report
    }

    /// First non-base node whose label is an existing base label, in
    /// (tree id, preorder) order.
    fn find_dedup_cut(&self) -> Option<(TreeId, Vec<String>)> {
        for (id, tree) in &self.trees {
            for (path, node) in tree.walk() {
                if path.len() >= 2 && self.base_index.contains_key(&node.label) {
                    return Some((*id, path));
                }
            }
        }
        None
    }

    /// First occurrence of the best shared complete leaf-ward branch that
    /// has no existing target tree.
    fn find_shared_branch(&self) -> Option<(TreeId, Vec<String>)> {
        use std::collections::BTreeMap;
        let mut occurrences: BTreeMap<Vec<String>, Vec<(TreeId, Vec<String>)>> = BTreeMap::new();
        for (id, tree) in &self.trees {
            for (path, node) in tree.walk() {
                if path.len() < 2 {
                    continue;
                }
                if let Some(chain) = node.closed_chain() {
                    occurrences.entry(chain).or_default().push((*id, path));
                }
            }
        }
        let mut candidates: Vec<(&Vec<String>, &Vec<(TreeId, Vec<String>)>)> = occurrences
            .iter()
            .filter(|(chain, occs)| {
                let distinct: BTreeSet<TreeId> = occs.iter().map(|(t, _)| *t).collect();
                distinct.len() as u64 >= self.config.min_share
                    && !self.base_index.contains_key(&chain[0])
            })
            .collect();
        candidates.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
        let (_, occs) = candidates.first()?;
        let mut occs = (*occs).clone();
        occs.sort();
        occs.into_iter().next().map(|(t, p)| (t, p))
    }

    /// Splits off branches the evidence marks as false: any non-base node
    /// with neg >= falsity_ratio * pos moves to its own tree behind a
    /// link, with its inherited negative counts cleared. The split itself
    /// resolves the ambiguity; future evidence re-accumulates.
    pub fn falsity_scan(&mut self) -> RestructureReport {
        let mut report = RestructureReport::default();
        let ratio = self.config.falsity_ratio;
        let qualifies = |node: &ConceptNode| {
            node.neg > 0 && node.pos > 0 && node.neg as f64 >= ratio * node.pos as f64
        };
        let mut candidates = Vec::new();
        for (id, tree) in &self.trees {
            for (path, node) in tree.walk() {
                if path.len() >= 2 && qualifies(node) {
                    candidates.push((*id, path));
                }
            }
        }
        // shallowest first: splitting a node carries its whole subtree, so
        // deeper candidates usually dissolve with it
        candidates.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.len().cmp(&b.1.len())).then(a.1.cmp(&b.1)));
        for (tid, path) in candidates {
            let still_qualifies = self
                .trees
                .get(&tid)
                .and_then(|t| t.node_at(&path))
                .map(&qualifies)
                .unwrap_or(false);
            if still_qualifies {
                self.cut_and_merge(tid, path, CutKind::Split, &mut report);
            }
        }
        report
    }

    /// Cuts the subtree at `node_path` out of `src`, folds its outflow into
    /// the cut parent's termination count, merges it into the tree based at
    /// its label (creating one if needed) and installs a link from the cut
    /// point. The link key is granted to every entity whose ledger events
    /// traversed the cut node.
    fn cut_and_merge(
        &mut self,
        src: TreeId,
        node_path: Vec<String>,
        kind: CutKind,
        report: &mut RestructureReport,
    ) {
        let grantees = self.entities_through(src, &node_path);
        let parent_path = node_path[..node_path.len() - 1].to_vec();
        let src_tree = self.trees.get_mut(&src).expect("cut source exists");
        let mut detached = tree::cut_absorbing(src_tree, &node_path).expect("cut path exists");
        // negative evidence against the branch moves onto the link's
        // compound count; the branch itself starts clean and future
        // evidence re-accumulates
        let carried_neg = detached.neg;
        detached.reset_neg();
        let detached_pos = detached.pos;
        let detached_spine = detached.spine();
        let label = detached.label.clone();
        let (target, attach_records) = match self.base_index.get(&label).copied() {
            Some(tid) => {
                let records =
                    self.trees.get_mut(&tid).expect("indexed tree exists").base.merge(detached);
                (tid, records)
            }
            None => {
                let tid = self.alloc_tree_id();
                self.trees.insert(tid, ConceptTree { id: tid, base: detached });
                self.base_index.insert(label, tid);
                report.created.push(tid);
                (tid, Vec::new())
            }
        };
        // links anchored inside the moved subtree follow it into the target
        let root_label = node_path.last().expect("non-base path").clone();
        let moved: Vec<(LinkKey, Vec<String>)> = self
            .links
            .links
            .values()
            .filter(|l| l.from_tree == src && l.from_path.starts_with(&node_path))
            .map(|l| {
                let mut new_path = vec![root_label.clone()];
                new_path.extend(l.from_path[node_path.len()..].iter().cloned());
                (l.key, new_path)
            })
            .collect();
        for (key, new_path) in moved {
            self.links.reanchor(key, target, new_path);
        }
        let (key, fresh) = self.links.install(src, parent_path, target, Some(detached_spine));
        {
            let link = self.links.links.get_mut(&key).expect("just installed");
            link.flow += detached_pos;
            link.compound.1 += carried_neg;
        }
        if fresh {
            report.links_added.push(key);
        }
        for entity in grantees {
            self.links.grant(&entity, GrantTarget::Key(key));
        }
        self.seed_attachments(target, attach_records);
        match kind {
            CutKind::Factor => report.pruned.push((src, node_path)),
            CutKind::Split => report.splits.push((src, node_path)),
        }
    }

    /// Seeds freshly attached subtrees with the genuine terminations of
    /// their attach parent: prior terminations minus what left across
    /// links, since link crossings are continuations, not endings.
    ///
    /// A subtree whose root label is an existing base label is skipped: it
    /// is a way station the dedup rule cuts straight back out, and the
    /// evidence against that continuation already lives on the link.
    fn seed_attachments(&mut self, tree_id: TreeId, records: Vec<(Vec<String>, u64)>) {
        for (child_path, prior_terminated) in records {
            let child_label = child_path.last().expect("attach paths are never empty");
            if self.base_index.contains_key(child_label) {
                continue;
            }
            let parent_path = &child_path[..child_path.len() - 1];
            let genuine =
                prior_terminated.saturating_sub(self.links.outflow(tree_id, parent_path));
            if genuine > 0 {
                if let Some(node) =
                    self.trees.get_mut(&tree_id).and_then(|t| t.node_at_mut(&child_path))
                {
                    node.seed_neg(genuine);
                }
            }
        }
    }

    /// Entities with at least one ledger event whose route through the
    /// current forest visits the given node.
    fn entities_through(&self, tree: TreeId, path: &[String]) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for event in &self.ledger {
            let Some(entity) = &event.entity else { continue };
            if out.contains(entity) {
                continue;
            }
            let visited = self.route_event(&event.concepts);
            if visited.iter().any(|(t, p)| *t == tree && p == path) {
                out.insert(entity.clone());
            }
        }
        out
    }

    /// Replays a concept sequence against the current structure: child
    /// edges first, link jumps where a matching child is missing. Returns
    /// every node visited as (tree, path) pairs; the route ends early if
    /// the structure cannot carry the sequence further.
    pub fn route_event(&self, concepts: &[String]) -> Vec<(TreeId, Vec<String>)> {
        let mut visited = Vec::new();
        let Some(first) = concepts.first() else { return visited };
        let Some(&start) = self.base_index.get(first) else { return visited };
        let mut tree = self.trees.get(&start).expect("indexed tree exists");
        let mut node = &tree.base;
        let mut path = vec![node.label.clone()];
        visited.push((tree.id, path.clone()));
        for label in &concepts[1..] {
            if let Some(child) = node.child(label) {
                node = child;
                path.push(label.clone());
            } else if let Some(link) = self.links.links.values().find(|l| {
                l.from_tree == tree.id
                    && l.from_path == path
                    && self.trees.get(&l.to_tree).is_some_and(|t| t.base.label == *label)
            }) {
                tree = self.trees.get(&link.to_tree).expect("link target exists");
                node = &tree.base;
                path = vec![node.label.clone()];
            } else {
                break;
            }
            visited.push((tree.id, path.clone()));
        }
        visited
    }

    /// Applies the re-join rule cascade to `t1` and `t2`.
    ///
    /// When `t1` links to `t2` the link side applies: equal entity
    /// references join automatically; extra references on `t2` refuse the
    /// join and add negative compound evidence to the link; a detached
    /// branch still contained in `t2` joins. Without a link, `t2`'s base
    /// must match a branch of `t1`: no references joins, equal references
    /// join, anything else refuses. A join that cannot keep the count
    /// invariants is rolled back and reported as refused.
    pub fn try_rejoin(&mut self, t1: TreeId, t2: TreeId) -> Result<RestructureReport, BaseError> {
        if !self.trees.contains_key(&t1) {
            return Err(BaseError::UnknownTree(t1));
        }
        if !self.trees.contains_key(&t2) {
            return Err(BaseError::UnknownTree(t2));
        }
        let mut report = RestructureReport::default();
        if t1 == t2 {
            return Err(BaseError::NotLinked(t1, t2));
        }
        let link_key = self
            .links
            .links
            .values()
            .filter(|l| l.from_tree == t1 && l.to_tree == t2)
            .map(|l| l.key)
            .min();
        match link_key {
            Some(key) => self.rejoin_via_link(t1, t2, key, &mut report),
            None => self.rejoin_base_to_branch(t1, t2, &mut report)?,
        }
        Ok(report)
    }

    fn rejoin_via_link(&mut self, t1: TreeId, t2: TreeId, key: LinkKey, report: &mut RestructureReport) {
        let refs1 = self.links.referencing_entities(t1);
        let refs2 = self.links.referencing_entities(t2);
        let link = self.links.link(key).expect("selected link exists").clone();
        let join = if refs2 == refs1 {
            true
        } else if refs2.is_superset(&refs1) {
            self.refuse(t1, t2, Some(key), "additional entity links on the target", report);
            return;
        } else {
            self.branch_contained(&link, t2)
        };
        if !join {
            self.refuse(t1, t2, Some(key), "entity links diverge and the branch is not contained", report);
            return;
        }
        if self.links.inbound_links(t2).iter().any(|k| *k != key) {
            self.refuse(t1, t2, Some(key), "other links target the tree base", report);
            return;
        }
        let t2_tree = self.trees.get(&t2).expect("checked").clone();
        let incoming = t2_tree.base.pos;
        // only mass that physically flowed across this link can be folded
        // back; anything else would misattribute counts
        if link.flow != incoming || incoming == 0 {
            self.refuse(t1, t2, Some(key), "counts cannot absorb the re-joined base", report);
            return;
        }
        let mut joined = self.trees.get(&t1).expect("checked").clone();
        let Some(node) = joined.node_at_mut(&link.from_path) else {
            self.refuse(t1, t2, Some(key), "link anchor no longer exists", report);
            return;
        };
        if node.terminated < incoming {
            self.refuse(t1, t2, Some(key), "counts cannot absorb the re-joined base", report);
            return;
        }
        node.terminated -= incoming;
        let base_label = t2_tree.base.label.clone();
        let mut attach_records = Vec::new();
        match node.child_mut(&base_label) {
            Some(existing) => {
                for (rec_path, prior) in existing.merge(t2_tree.base) {
                    let mut full = link.from_path.clone();
                    full.extend(rec_path);
                    attach_records.push((full, prior));
                }
            }
            None => {
                let prior = node.terminated;
                let mut full = link.from_path.clone();
                full.push(base_label);
                attach_records.push((full, prior));
                node.children.push(t2_tree.base);
            }
        }
        if !tree::validate(&joined).is_empty() {
            self.refuse(t1, t2, Some(key), "join would break the count invariants", report);
            return;
        }
        self.links.remove_link(key);
        self.commit_join(t1, t2, joined, &link.from_path, report);
        self.seed_attachments(t1, attach_records);
    }

    fn rejoin_base_to_branch(
        &mut self,
        t1: TreeId,
        t2: TreeId,
        report: &mut RestructureReport,
    ) -> Result<(), BaseError> {
        let t2_label = self.trees.get(&t2).expect("checked").base.label.clone();
        let attach_path = {
            let t1_tree = self.trees.get(&t1).expect("checked");
            t1_tree
                .walk()
                .into_iter()
                .find(|(path, node)| path.len() >= 2 && node.label == t2_label)
                .map(|(path, _)| path)
        };
        let Some(attach_path) = attach_path else {
            return Err(BaseError::NotLinked(t1, t2));
        };
        let refs1 = self.links.referencing_entities(t1);
        let refs2 = self.links.referencing_entities(t2);
        if !(refs2.is_empty() || refs2 == refs1) {
            self.refuse(t1, t2, None, "entity links differ, the base must stay accessible", report);
            return Ok(());
        }
        if !self.links.inbound_links(t2).is_empty() {
            self.refuse(t1, t2, None, "other links target the tree base", report);
            return Ok(());
        }
        let t2_tree = self.trees.get(&t2).expect("checked").clone();
        let incoming = t2_tree.base.pos;
        let mut joined = self.trees.get(&t1).expect("checked").clone();
        let parent_path = &attach_path[..attach_path.len() - 1];
        let parent = joined.node_at_mut(parent_path).expect("walked path exists");
        if parent.terminated < incoming {
            self.refuse(t1, t2, None, "counts cannot absorb the re-joined base", report);
            return Ok(());
        }
        parent.terminated -= incoming;
        let mut attach_records = Vec::new();
        for (rec_path, prior) in parent
            .child_mut(&t2_label)
            .expect("attach node is a child of its parent")
            .merge(t2_tree.base)
        {
            let mut full = parent_path.to_vec();
            full.extend(rec_path);
            attach_records.push((full, prior));
        }
        if !tree::validate(&joined).is_empty() {
            self.refuse(t1, t2, None, "join would break the count invariants", report);
            return Ok(());
        }
        self.commit_join(t1, t2, joined, parent_path, report);
        self.seed_attachments(t1, attach_records);
        Ok(())
    }

    /// True when the branch recorded at cut time still runs from the base
    /// of `t2`.
    fn branch_contained(&self, link: &Link, t2: TreeId) -> bool {
        let Some(detached) = &link.detached_path else { return false };
        let Some(t2_tree) = self.trees.get(&t2) else { return false };
        t2_tree.node_at(detached).is_some()
    }

    fn refuse(
        &mut self,
        t1: TreeId,
        t2: TreeId,
        key: Option<LinkKey>,
        reason: &str,
        report: &mut RestructureReport,
    ) {
        if let Some(key) = key {
            if let Some(link) = self.links.links.get_mut(&key) {
                link.compound.1 += 1;
            }
        }
        report.refusals.push((t1, t2, reason.to_string()));
    }

    fn commit_join(
        &mut self,
        t1: TreeId,
        t2: TreeId,
        joined: ConceptTree,
        prefix: &[String],
        report: &mut RestructureReport,
    ) {
        let t2_label = self.trees.get(&t2).expect("checked").base.label.clone();
        self.trees.insert(t1, joined);
        self.trees.remove(&t2);
        self.base_index.remove(&t2_label);
        // links anchored inside the joined tree now live under t1
        let moved: Vec<(LinkKey, Vec<String>)> = self
            .links
            .links
            .values()
            .filter(|l| l.from_tree == t2)
            .map(|l| {
                let mut new_path = prefix.to_vec();
                new_path.extend(l.from_path.iter().cloned());
                (l.key, new_path)
            })
            .collect();
        for (key, new_path) in moved {
            self.links.reanchor(key, t1, new_path);
        }
        for ks in self.links.keysets.values_mut() {
            ks.start_trees.remove(&t2);
        }
        report.rejoins.push((t1, t2));
    }

    /// One decay step: links used since the last step refresh to full
    /// strength, the rest decay by 2^(-1/half_life); links that sink below
    /// the floor are removed and purged from every keyset.
    pub fn decay_tick(&mut self) -> RestructureReport {
        let mut report = RestructureReport::default();
        let factor = (-1.0 / self.config.decay_half_life).exp2();
        let floor = self.config.strength_floor;
        let mut doomed = Vec::new();
        for link in self.links.links.values_mut() {
            if link.used_since_decay {
                link.strength = 1.0;
                link.used_since_decay = false;
            } else {
                link.strength *= factor;
                if link.strength < floor {
                    doomed.push(link.key);
                }
            }
        }
        for key in doomed {
            self.links.remove_link(key);
            report.links_removed.push(key);
        }
        report
    }

    /// Marks links as used so the next decay tick refreshes them.
    pub fn touch_links(&mut self, keys: &[LinkKey]) {
        for key in keys {
            if let Some(link) = self.links.links.get_mut(key) {
                link.used_since_decay = true;
            }
        }
    }

    /// Installs (or reinforces) a link from an existing node to an existing
    /// tree's base.
    pub fn create_link(
        &mut self,
        from_tree: TreeId,
        from_path: &[String],
        to_tree: TreeId,
    ) -> Result<LinkKey, LinkError> {
        let anchored = self
            .trees
            .get(&from_tree)
            .and_then(|t| t.node_at(from_path))
            .is_some();
        if !anchored {
            return Err(LinkError::DanglingEndpoint(format!(
                "no node at {}/{}",
                from_tree,
                from_path.join("/")
            )));
        }
        if !self.trees.contains_key(&to_tree) {
            return Err(LinkError::DanglingEndpoint(format!("no tree {}", to_tree)));
        }
        let (key, _) = self.links.install(from_tree, from_path.to_vec(), to_tree, None);
        Ok(key)
    }

    /// Adds a capability to an entity's keyset, registering the entity on
    /// first use.
    pub fn grant(&mut self, entity: &str, target: GrantTarget) -> Result<(), BaseError> {
        match target {
            GrantTarget::Key(k) if self.links.link(k).is_none() => {
                return Err(BaseError::UnknownKey(k))
            }
            GrantTarget::StartTree(t) if !self.trees.contains_key(&t) => {
                return Err(BaseError::UnknownTree(t))
            }
            _ => {}
        }
        self.links.grant(entity, target);
        Ok(())
    }

    /// Removes a capability; revoking something the entity lacks is a no-op.
    pub fn revoke(&mut self, entity: &str, target: GrantTarget) {
        self.links.revoke(entity, target);
    }

    /// Adds a pre-built tree to the forest, validating it first. Intended
    /// for constructed fixtures and imports.
    pub fn adopt_tree(&mut self, base_node: ConceptNode) -> Result<TreeId, BaseError> {
        if self.base_index.contains_key(&base_node.label) {
            return Err(BaseError::BaseTaken(base_node.label));
        }
        let id = self.alloc_tree_id();
        let tree = ConceptTree { id, base: base_node };
        let violations = tree::validate(&tree);
        if let Some(v) = violations.first() {
            return Err(BaseError::InvalidTree(v.to_string()));
        }
        self.base_index.insert(tree.base.label.clone(), id);
        self.trees.insert(id, tree);
        Ok(id)
    }

    /// Count-rule violations across the whole forest.
    pub fn violations(&self) -> Vec<(TreeId, Violation)> {
        let mut out = Vec::new();
        for (id, tree) in &self.trees {
            for v in tree::validate(tree) {
                out.push((*id, v));
            }
        }
        out
    }

    /// Referential problems: dangling link endpoints, keyset entries
    /// pointing nowhere, or a base index out of step with the trees.
    pub fn integrity_issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (label, id) in &self.base_index {
            match self.trees.get(id) {
                None => out.push(format!("base index maps {:?} to missing tree {}", label, id)),
                Some(t) if t.base.label != *label => {
                    out.push(format!("base index maps {:?} to tree {} based at {:?}", label, id, t.base.label))
                }
                _ => {}
            }
        }
        for tree in self.trees.values() {
            if self.base_index.get(&tree.base.label) != Some(&tree.id) {
                out.push(format!("tree {} is missing from the base index", tree.id));
            }
        }
        for link in self.links.links() {
            if self.trees.get(&link.from_tree).and_then(|t| t.node_at(&link.from_path)).is_none() {
                out.push(format!("link {} anchor {}/{} is gone", link.key, link.from_tree, link.from_path.join("/")));
            }
            if !self.trees.contains_key(&link.to_tree) {
                out.push(format!("link {} targets missing tree {}", link.key, link.to_tree));
            }
            if !(link.strength > 0.0 && link.strength <= 1.0) {
                out.push(format!("link {} strength {} out of (0, 1]", link.key, link.strength));
            }
        }
        for ks in self.links.keysets() {
            for t in &ks.start_trees {
                if !self.trees.contains_key(t) {
                    out.push(format!("keyset {:?} starts at missing tree {}", ks.primary, t));
                }
            }
            for k in &ks.link_keys {
                if self.links.link(*k).is_none() {
                    out.push(format!("keyset {:?} holds missing key {}", ks.primary, k));
                }
            }
        }
        out
    }
}
