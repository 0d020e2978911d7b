//! Structural health measurements: ordering energy, forest aggregates and
//! violation counts. All read-only.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::base::ConceptBase;
use crate::tree::{ConceptNode, ConceptTree, TreeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("energy of an empty list is undefined")]
    EmptyList,
}

/// Units needed to traverse the values in order: the sum of absolute
/// consecutive differences. A descending run of distinct values is the
/// minimal arrangement.
pub fn energy(values: &[u64]) -> Result<u64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    Ok(values.windows(2).map(|w| w[0].abs_diff(w[1])).sum())
}

/// Ordering energy of a tree: [`energy`] of the pos counts along each
/// base-to-leaf path, summed over paths. A monotone non-increasing path
/// contributes exactly base pos minus leaf pos.
pub fn tree_energy(tree: &ConceptTree) -> u64 {
    fn walk(node: &ConceptNode, counts: &mut Vec<u64>, total: &mut u64) {
        counts.push(node.pos);
        if node.children.is_empty() {
            *total += energy(counts).expect("path is never empty");
        }
        for child in &node.children {
            walk(child, counts, total);
        }
        counts.pop();
    }
    let mut total = 0;
    walk(&tree.base, &mut Vec::new(), &mut total);
    total
}

/// Aggregate numbers for one forest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForestStats {
    pub tree_count: u64,
    pub node_count: u64,
    pub max_depth: u64,
    pub mean_tree_size: f64,
    pub violation_count: u64,
    pub total_links: u64,
    pub energy_per_tree: BTreeMap<TreeId, u64>,
}

impl ForestStats {
    /// Deterministic `key = value` rendering for the CLI.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("tree_count = {}\n", self.tree_count));
        out.push_str(&format!("node_count = {}\n", self.node_count));
        out.push_str(&format!("max_depth = {}\n", self.max_depth));
        out.push_str(&format!("mean_tree_size = {:?}\n", self.mean_tree_size));
        out.push_str(&format!("violation_count = {}\n", self.violation_count));
        out.push_str(&format!("total_links = {}\n", self.total_links));
        for (id, units) in &self.energy_per_tree {
            out.push_str(&format!("energy_tree_{} = {}\n", id, units));
        }
        out
    }
}

pub fn stats(base: &ConceptBase) -> ForestStats {
    let mut s = ForestStats::default();
    for tree in base.trees() {
        s.tree_count += 1;
        s.node_count += tree.node_count() as u64;
        s.max_depth = s.max_depth.max(tree.base.depth() as u64);
        s.energy_per_tree.insert(tree.id, tree_energy(tree));
    }
    s.mean_tree_size =
        if s.tree_count == 0 { 0.0 } else { s.node_count as f64 / s.tree_count as f64 };
    s.violation_count = base.violations().len() as u64;
    s.total_links = base.link_index().links().count() as u64;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SequenceEvent;

    #[test]
    fn energy_of_the_reference_arrangements() {
        assert_eq!(energy(&[8, 7, 6, 5, 4, 3, 2, 1]), Ok(7));
        assert_eq!(energy(&[8, 7, 6, 5, 4, 2, 3, 1]), Ok(9));
        assert_eq!(energy(&[5]), Ok(0));
        assert_eq!(energy(&[]), Err(MetricsError::EmptyList));
    }

    #[test]
    fn descending_order_minimizes_energy() {
        // brute force over all permutations of 1..=7
        fn permutations(values: &mut Vec<u64>, k: usize, out: &mut Vec<Vec<u64>>) {
            if k == values.len() {
                out.push(values.clone());
                return;
            }
            for i in k..values.len() {
                values.swap(k, i);
                permutations(values, k + 1, out);
                values.swap(k, i);
            }
        }
        let mut values: Vec<u64> = (1..=7).collect();
        let mut all = Vec::new();
        permutations(&mut values.clone(), 0, &mut all);
        let min = all.iter().map(|p| energy(p).unwrap()).min().unwrap();
        assert_eq!(min, 6);
        let minimizers: Vec<&Vec<u64>> =
            all.iter().filter(|p| energy(p).unwrap() == min).collect();
        values.sort_by(|a, b| b.cmp(a));
        let descending = values;
        let ascending: Vec<u64> = descending.iter().rev().copied().collect();
        assert_eq!(minimizers.len(), 2);
        assert!(minimizers.contains(&&descending));
        assert!(minimizers.contains(&&ascending));
    }

    #[test]
    fn adjacent_transposition_of_a_strict_descent_raises_energy() {
        let descent: Vec<u64> = (1..=8).rev().collect();
        let base_energy = energy(&descent).unwrap();
        for i in 0..descent.len() - 1 {
            let mut v = descent.clone();
            v.swap(i, i + 1);
            assert!(energy(&v).unwrap() > base_energy, "swap at {} did not raise energy", i);
        }
    }

    #[test]
    fn tree_energy_telescopes_on_monotone_paths() {
        use crate::tree::{ConceptNode, ConceptTree, TreeId};
        // single chain 3 -> 2 -> 1
        let mut a = ConceptNode::new("a");
        a.pos = 3;
        a.terminated = 1;
        let mut b = ConceptNode::new("b");
        b.pos = 2;
        b.terminated = 1;
        let mut c = ConceptNode::new("c");
        c.pos = 1;
        c.terminated = 1;
        b.children.push(c);
        a.children.push(b);
        let tree = ConceptTree { id: TreeId(1), base: a };
        assert_eq!(tree_energy(&tree), 2);

        let mut single = ConceptNode::new("x");
        single.terminated = 1;
        let tree = ConceptTree { id: TreeId(2), base: single };
        assert_eq!(tree_energy(&tree), 0);
    }

    #[test]
    fn stats_on_empty_and_worked_bases() {
        let base = ConceptBase::default();
        let s = stats(&base);
        assert_eq!(s, ForestStats::default());

        let mut base = ConceptBase::default();
        for (i, concepts) in [
            ["black", "cat", "sat", "mat"],
            ["black", "cat", "drank", "milk"],
        ]
        .iter()
        .enumerate()
        {
            let event = SequenceEvent::new(
                concepts.iter().map(|s| s.to_string()).collect(),
                i as u64,
                None,
            )
            .unwrap();
            base.ingest(event).unwrap();
        }
        let s = stats(&base);
        assert_eq!(s.tree_count, 1);
        assert_eq!(s.node_count, 6);
        assert_eq!(s.max_depth, 4);
        assert_eq!(s.violation_count, 0);
        // both base-to-leaf paths run 2,2,1,1
        assert_eq!(s.energy_per_tree.values().sum::<u64>(), 2);
    }
}
