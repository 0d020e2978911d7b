//! Graphviz rendering: one cluster per tree, solid parent edges, dashed
//! link edges labeled with their key.

use std::fmt::Write;

use crate::base::ConceptBase;
use crate::tree::ConceptNode;

/// Renders the forest as DOT. Node labels show `label pos:neg:terminated`.
pub fn render(base: &ConceptBase) -> String {
    let mut out = String::new();
    out.push_str("digraph conceptbase {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=box];\n");
    // node ids are (tree, preorder index); remember each path's id so link
    // edges can anchor on it
    let mut ids: std::collections::BTreeMap<(crate::tree::TreeId, Vec<String>), String> =
        Default::default();
    for tree in base.trees() {
        writeln!(out, "  subgraph cluster_t{} {{", tree.id).unwrap();
        writeln!(out, "    label=\"tree {}\";", tree.id).unwrap();
        let mut counter = 0;
        render_node(&tree.base, tree, None, &mut counter, &mut ids, &mut out);
        out.push_str("  }\n");
    }
    for link in base.link_index().links() {
        let from = ids.get(&(link.from_tree, link.from_path.clone()));
        let to = base
            .tree(link.to_tree)
            .and_then(|t| ids.get(&(t.id, vec![t.base.label.clone()])));
        if let (Some(from), Some(to)) = (from, to) {
            writeln!(out, "  {} -> {} [style=dashed, label=\"{}\"];", from, to, link.key).unwrap();
        }
    }
    out.push_str("}\n");
    out
}

fn render_node(
    node: &ConceptNode,
    tree: &crate::tree::ConceptTree,
    parent: Option<&str>,
    counter: &mut usize,
    ids: &mut std::collections::BTreeMap<(crate::tree::TreeId, Vec<String>), String>,
    out: &mut String,
) {
    fn walk(
        node: &ConceptNode,
        tree_id: crate::tree::TreeId,
        path: &mut Vec<String>,
        parent: Option<String>,
        counter: &mut usize,
        ids: &mut std::collections::BTreeMap<(crate::tree::TreeId, Vec<String>), String>,
        out: &mut String,
    ) {
        path.push(node.label.clone());
        let id = format!("t{}_{}", tree_id, counter);
        *counter += 1;
        ids.insert((tree_id, path.clone()), id.clone());
        writeln!(
            out,
            "    {} [label=\"{} {}:{}:{}\"];",
            id,
            escape(&node.label),
            node.pos,
            node.neg,
            node.terminated
        )
        .unwrap();
        if let Some(parent) = &parent {
            writeln!(out, "    {} -> {};", parent, id).unwrap();
        }
        for child in &node.children {
            walk(child, tree_id, path, Some(id.clone()), counter, ids, out);
        }
        path.pop();
    }
    let mut path = Vec::new();
    walk(node, tree.id, &mut path, parent.map(|p| p.to_string()), counter, ids, out);
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
