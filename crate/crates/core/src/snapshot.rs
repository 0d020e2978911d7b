//! Persistence: a deterministic, line-oriented snapshot of a whole
//! concept base, chosen for diff-ability.
//!
//! Layout: a `conceptbase v1` header, then `[meta]`, `[config]`, one
//! `[tree N]` section per tree (2-space indentation encodes nesting,
//! fields are tab-separated `label pos neg terminated`), `[links]`,
//! `[keysets]`, `[ledger]` and a closing `[end]` marker. Trees are ordered
//! by id, children in insertion order, links by key, keysets by primary
//! key. Loading re-validates every invariant.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::base::ConceptBase;
use crate::config::BaseConfig;
use crate::ingest::SequenceEvent;
use crate::links::{EntityKeyset, Link, LinkKey};
use crate::tree::{ConceptNode, ConceptTree, TreeId};

pub const FORMAT_HEADER: &str = "conceptbase v1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("corrupt snapshot at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("unsupported snapshot version {0:?}")]
    VersionMismatch(String),
}

fn corrupt(line: usize, reason: impl Into<String>) -> SnapshotError {
    SnapshotError::Corrupt { line, reason: reason.into() }
}

fn path_str(path: &[String]) -> String {
    path.join("/")
}

fn opt_path_str(path: &Option<Vec<String>>) -> String {
    match path {
        Some(p) if !p.is_empty() => path_str(p),
        _ => "-".to_string(),
    }
}

/// Serializes the base. Identical bases produce identical bytes.
pub fn save(base: &ConceptBase, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{}", FORMAT_HEADER)?;
    writeln!(out, "[meta]")?;
    writeln!(out, "clock\t{}", base.clock)?;
    writeln!(out, "next_link_key\t{}", base.links.next_key)?;
    writeln!(out, "next_tree_id\t{}", base.next_tree_id)?;
    writeln!(out, "[config]")?;
    out.write_all(base.config.render().as_bytes())?;
    for (id, tree) in &base.trees {
        writeln!(out, "[tree {}]", id)?;
        write_node(&tree.base, 0, &mut out)?;
    }
    writeln!(out, "[links]")?;
    for link in base.links.links.values() {
        let gi = match link.group_individual {
            Some((g, i)) => format!("{}:{}", g, i),
            None => "-".to_string(),
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{}",
            link.key.0,
            link.from_tree.0,
            path_str(&link.from_path),
            link.to_tree.0,
            link.strength,
            link.compound.0,
            link.compound.1,
            link.flow,
            u8::from(link.used_since_decay),
            gi,
            opt_path_str(&link.detached_path),
        )?;
    }
    writeln!(out, "[keysets]")?;
    for ks in base.links.keysets.values() {
        let trees = csv(ks.start_trees.iter().map(|t| t.0));
        let keys = csv(ks.link_keys.iter().map(|k| k.0));
        writeln!(out, "{}\t{}\t{}", ks.primary, trees, keys)?;
    }
    writeln!(out, "[ledger]")?;
    for event in &base.ledger {
        writeln!(
            out,
            "{}\t{}\t{}",
            event.timestamp,
            event.entity.as_deref().unwrap_or("-"),
            event.concepts.join(" "),
        )?;
    }
    writeln!(out, "[end]")?;
    Ok(())
}

fn csv(values: impl Iterator<Item = u64>) -> String {
    let joined: Vec<String> = values.map(|v| v.to_string()).collect();
    if joined.is_empty() {
        "-".to_string()
    } else {
        joined.join(",")
    }
}

fn write_node(node: &ConceptNode, depth: usize, out: &mut impl Write) -> io::Result<()> {
    writeln!(
        out,
        "{}{}\t{}\t{}\t{}",
        "  ".repeat(depth),
        node.label,
        node.pos,
        node.neg,
        node.terminated
    )?;
    for child in &node.children {
        write_node(child, depth + 1, out)?;
    }
    Ok(())
}

struct Lines<I> {
    inner: I,
    no: usize,
    peeked: Option<String>,
}

impl<I: Iterator<Item = io::Result<String>>> Lines<I> {
    fn next_line(&mut self) -> Result<Option<String>, SnapshotError> {
        if let Some(line) = self.peeked.take() {
            return Ok(Some(line));
        }
        match self.inner.next() {
            None => Ok(None),
            Some(Err(e)) => Err(e.into()),
            Some(Ok(line)) => {
                self.no += 1;
                Ok(Some(line))
            }
        }
    }

    fn put_back(&mut self, line: String) {
        debug_assert!(self.peeked.is_none());
        self.peeked = Some(line);
    }
}

/// Reconstructs a base from a snapshot, re-validating all invariants.
pub fn load(source: impl BufRead) -> Result<ConceptBase, SnapshotError> {
    let mut lines = Lines { inner: source.lines(), no: 0, peeked: None };

    let header = lines.next_line()?.ok_or_else(|| corrupt(1, "empty file"))?;
    if header != FORMAT_HEADER {
        if let Some(version) = header.strip_prefix("conceptbase ") {
            return Err(SnapshotError::VersionMismatch(version.to_string()));
        }
        return Err(corrupt(1, "missing `conceptbase v1` header"));
    }

    expect_section(&mut lines, "[meta]")?;
    let clock = meta_field(&mut lines, "clock")?;
    let next_link_key = meta_field(&mut lines, "next_link_key")?;
    let next_tree_id = meta_field(&mut lines, "next_tree_id")?;

    expect_section(&mut lines, "[config]")?;
    let mut config_text = String::new();
    loop {
        let line = lines.next_line()?.ok_or_else(|| corrupt(lines.no, "truncated in [config]"))?;
        if line.starts_with('[') {
            lines.put_back(line);
            break;
        }
        config_text.push_str(&line);
        config_text.push('\n');
    }
    let config = BaseConfig::from_reader(config_text.as_bytes())
        .map_err(|e| corrupt(lines.no, format!("bad config: {}", e)))?;

    let mut base = ConceptBase::new(config);
    base.clock = clock;
    base.links.next_key = next_link_key;
    base.next_tree_id = next_tree_id;

    // trees
    loop {
        let line = lines.next_line()?.ok_or_else(|| corrupt(lines.no, "truncated before [links]"))?;
        if line == "[links]" {
            break;
        }
        let id = line
            .strip_prefix("[tree ")
            .and_then(|rest| rest.strip_suffix(']'))
            .and_then(|n| n.parse::<u64>().ok())
            .ok_or_else(|| corrupt(lines.no, format!("expected `[tree N]` or `[links]`, got {:?}", line)))?;
        let tree = read_tree(&mut lines, TreeId(id))?;
        if tree.id.0 >= base.next_tree_id {
            return Err(corrupt(lines.no, format!("tree {} is not below next_tree_id {}", id, base.next_tree_id)));
        }
        if base.base_index.insert(tree.base.label.clone(), tree.id).is_some() {
            return Err(corrupt(lines.no, format!("duplicate base label {:?}", tree.base.label)));
        }
        if base.trees.insert(tree.id, tree).is_some() {
            return Err(corrupt(lines.no, format!("duplicate tree id {}", id)));
        }
    }

    // links
    loop {
        let line = lines.next_line()?.ok_or_else(|| corrupt(lines.no, "truncated in [links]"))?;
        if line == "[keysets]" {
            break;
        }
        let link = parse_link(&line, lines.no)?;
        if link.key.0 >= base.links.next_key {
            return Err(corrupt(lines.no, format!("link key {} is not below next_link_key", link.key)));
        }
        if base.links.links.insert(link.key, link).is_some() {
            return Err(corrupt(lines.no, "duplicate link key"));
        }
    }

    // keysets
    loop {
        let line = lines.next_line()?.ok_or_else(|| corrupt(lines.no, "truncated in [keysets]"))?;
        if line == "[ledger]" {
            break;
        }
        let ks = parse_keyset(&line, lines.no)?;
        if base.links.keysets.insert(ks.primary.clone(), ks).is_some() {
            return Err(corrupt(lines.no, "duplicate keyset entity"));
        }
    }

    // ledger
    loop {
        let line = lines.next_line()?.ok_or_else(|| corrupt(lines.no, "truncated in [ledger]"))?;
        if line == "[end]" {
            break;
        }
        base.ledger.push(parse_ledger_event(&line, lines.no)?);
    }

    for (id, tree) in &base.trees {
        if let Some(v) = crate::tree::validate(tree).first() {
            return Err(corrupt(0, format!("tree {} violates {}", id, v)));
        }
    }
    if let Some(issue) = base.integrity_issues().first() {
        return Err(corrupt(0, issue.clone()));
    }
    Ok(base)
}

fn expect_section<I: Iterator<Item = io::Result<String>>>(
    lines: &mut Lines<I>,
    name: &str,
) -> Result<(), SnapshotError> {
    let line = lines.next_line()?.ok_or_else(|| corrupt(lines.no, format!("truncated before {}", name)))?;
    if line != name {
        return Err(corrupt(lines.no, format!("expected {}, got {:?}", name, line)));
    }
    Ok(())
}

fn meta_field<I: Iterator<Item = io::Result<String>>>(
    lines: &mut Lines<I>,
    name: &str,
) -> Result<u64, SnapshotError> {
    let line = lines.next_line()?.ok_or_else(|| corrupt(lines.no, format!("truncated before meta {}", name)))?;
    let value = line
        .strip_prefix(name)
        .and_then(|rest| rest.strip_prefix('\t'))
        .ok_or_else(|| corrupt(lines.no, format!("expected `{}<TAB>value`", name)))?;
    value.parse().map_err(|e| corrupt(lines.no, format!("bad {}: {}", name, e)))
}

fn read_tree<I: Iterator<Item = io::Result<String>>>(
    lines: &mut Lines<I>,
    id: TreeId,
) -> Result<ConceptTree, SnapshotError> {
    let mut stack: Vec<ConceptNode> = Vec::new();
    loop {
        let Some(line) = lines.next_line()? else {
            return Err(corrupt(lines.no, "truncated inside a tree section"));
        };
        if line.starts_with('[') {
            lines.put_back(line);
            break;
        }
        let trimmed = line.trim_start_matches(' ');
        let indent = line.len() - trimmed.len();
        if indent % 2 != 0 {
            return Err(corrupt(lines.no, "odd indentation"));
        }
        let depth = indent / 2;
        if depth > stack.len() {
            return Err(corrupt(lines.no, "indentation skips a level"));
        }
        let mut fields = trimmed.split('\t');
        let node = (|| -> Option<ConceptNode> {
            let label = fields.next()?.to_string();
            let pos = fields.next()?.parse().ok()?;
            let neg = fields.next()?.parse().ok()?;
            let terminated = fields.next()?.parse().ok()?;
            if fields.next().is_some() || label.is_empty() {
                return None;
            }
            Some(ConceptNode { label, pos, neg, terminated, children: Vec::new() })
        })()
        .ok_or_else(|| corrupt(lines.no, "expected `label<TAB>pos<TAB>neg<TAB>terminated`"))?;
        while stack.len() > depth {
            let done = stack.pop().expect("stack is non-empty");
            match stack.last_mut() {
                Some(parent) => parent.children.push(done),
                None => return Err(corrupt(lines.no, "a tree section may hold only one base node")),
            }
        }
        stack.push(node);
    }
    while stack.len() > 1 {
        let done = stack.pop().expect("checked");
        stack.last_mut().expect("checked").children.push(done);
    }
    let base = stack.pop().ok_or_else(|| corrupt(lines.no, "empty tree section"))?;
    Ok(ConceptTree { id, base })
}

fn parse_path(s: &str, line: usize) -> Result<Vec<String>, SnapshotError> {
    let parts: Vec<String> = s.split('/').map(|p| p.to_string()).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(corrupt(line, format!("bad path {:?}", s)));
    }
    Ok(parts)
}

fn parse_link(line_text: &str, line: usize) -> Result<Link, SnapshotError> {
    let fields: Vec<&str> = line_text.split('\t').collect();
    if fields.len() != 11 {
        return Err(corrupt(line, format!("expected 11 link fields, got {}", fields.len())));
    }
    let parse_u64 = |s: &str, what: &str| -> Result<u64, SnapshotError> {
        s.parse().map_err(|e| corrupt(line, format!("bad {}: {}", what, e)))
    };
    let strength: f64 = fields[4]
        .parse()
        .map_err(|e| corrupt(line, format!("bad strength: {}", e)))?;
    if !(strength > 0.0 && strength <= 1.0) {
        return Err(corrupt(line, format!("strength {} out of (0, 1]", strength)));
    }
    let group_individual = match fields[9] {
        "-" => None,
        gi => {
            let (g, i) = gi
                .split_once(':')
                .ok_or_else(|| corrupt(line, "group_individual must be `g:i` or `-`"))?;
            Some((parse_u64(g, "group count")?, parse_u64(i, "individual count")?))
        }
    };
    let detached_path = match fields[10] {
        "-" => None,
        p => Some(parse_path(p, line)?),
    };
    Ok(Link {
        key: LinkKey(parse_u64(fields[0], "link key")?),
        from_tree: TreeId(parse_u64(fields[1], "from tree")?),
        from_path: parse_path(fields[2], line)?,
        to_tree: TreeId(parse_u64(fields[3], "to tree")?),
        strength,
        compound: (parse_u64(fields[5], "compound positive")?, parse_u64(fields[6], "compound negative")?),
        flow: parse_u64(fields[7], "flow")?,
        group_individual,
        used_since_decay: match fields[8] {
            "0" => false,
            "1" => true,
            other => return Err(corrupt(line, format!("bad used flag {:?}", other))),
        },
        detached_path,
    })
}

fn parse_keyset(line_text: &str, line: usize) -> Result<EntityKeyset, SnapshotError> {
    let fields: Vec<&str> = line_text.split('\t').collect();
    if fields.len() != 3 {
        return Err(corrupt(line, format!("expected 3 keyset fields, got {}", fields.len())));
    }
    let parse_csv = |s: &str, what: &str| -> Result<Vec<u64>, SnapshotError> {
        if s == "-" {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|v| v.parse().map_err(|e| corrupt(line, format!("bad {}: {}", what, e))))
            .collect()
    };
    Ok(EntityKeyset {
        primary: fields[0].to_string(),
        start_trees: parse_csv(fields[1], "start tree id")?.into_iter().map(TreeId).collect(),
        link_keys: parse_csv(fields[2], "link key")?.into_iter().map(LinkKey).collect(),
    })
}

fn parse_ledger_event(line_text: &str, line: usize) -> Result<SequenceEvent, SnapshotError> {
    let fields: Vec<&str> = line_text.split('\t').collect();
    if fields.len() != 3 {
        return Err(corrupt(line, format!("expected 3 ledger fields, got {}", fields.len())));
    }
    let timestamp = fields[0].parse().map_err(|e| corrupt(line, format!("bad tick: {}", e)))?;
    let entity = match fields[1] {
        "-" => None,
        e => Some(e.to_string()),
    };
    let concepts: Vec<String> = fields[2].split(' ').map(|s| s.to_string()).collect();
    SequenceEvent::new(concepts, timestamp, entity)
        .map_err(|e| corrupt(line, format!("bad event: {}", e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn worked_base() -> ConceptBase {
        let mut base = ConceptBase::default();
        let sentences: &[&[&str]] = &[
            &["black", "cat", "sat", "mat"],
            &["black", "cat", "drank", "milk"],
            &["thirsty", "boy", "drank", "milk"],
            &["thirsty", "elephant", "drank", "milk"],
        ];
        for (i, s) in sentences.iter().enumerate() {
            let entity = ["cat", "cat", "boy", "elephant"][i];
            let event = SequenceEvent::new(labels(s), i as u64, Some(entity.into())).unwrap();
            base.ingest(event).unwrap();
        }
        base
    }

    fn bytes(base: &ConceptBase) -> Vec<u8> {
        let mut out = Vec::new();
        save(base, &mut out).unwrap();
        out
    }

    #[test]
    fn empty_base_roundtrips() {
        let base = ConceptBase::default();
        let data = bytes(&base);
        let loaded = load(data.as_slice()).unwrap();
        assert_eq!(loaded, base);
        assert_eq!(bytes(&loaded), data);
    }

    #[test]
    fn worked_base_is_a_save_load_save_fixpoint() {
        let base = worked_base();
        let first = bytes(&base);
        let loaded = load(first.as_slice()).unwrap();
        assert_eq!(loaded, base);
        assert_eq!(bytes(&loaded), first);
    }

    #[test]
    fn truncated_snapshots_are_rejected() {
        let data = bytes(&worked_base());
        for cut in [10, data.len() / 2, data.len() - 3] {
            let err = load(&data[..cut]).unwrap_err();
            assert!(matches!(err, SnapshotError::Corrupt { .. }), "cut at {} gave {:?}", cut, err);
        }
    }

    #[test]
    fn future_versions_are_rejected() {
        let err = load("conceptbase v2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SnapshotError::VersionMismatch(v) if v == "v2"));
        let err = load("something else\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SnapshotError::Corrupt { line: 1, .. }));
    }

    #[test]
    fn tampered_counts_fail_validation() {
        let text = String::from_utf8(bytes(&worked_base())).unwrap();
        let tampered = text.replace("black\t2\t0\t0", "black\t9\t0\t0");
        assert!(load(tampered.as_bytes()).is_err());
    }
}
