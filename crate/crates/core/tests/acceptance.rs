//! Acceptance suite: one test per criterion, golden-example reproduction
//! plus the property checks. Runs at desk scale.

mod oracle;

use std::collections::BTreeSet;

use concept_base::{
    energy, extract_sequences_for, query, snapshot, tree, BaseConfig, ConceptBase, IngestClock,
    SequenceEvent, StopWords,
};

fn labels(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn ingest_text(base: &mut ConceptBase, text: &str, entity: Option<&str>) {
    let stopwords = StopWords::default();
    let first_tick = if base.ledger().is_empty() { 0 } else { base.clock() + 1 };
    let mut clock = IngestClock::starting_at(first_tick);
    for event in extract_sequences_for(text, &stopwords, &mut clock, entity) {
        base.ingest(event).unwrap();
    }
}

fn snapshot_bytes(base: &ConceptBase) -> Vec<u8> {
    let mut out = Vec::new();
    snapshot::save(base, &mut out).unwrap();
    out
}

fn assert_clean(base: &ConceptBase) {
    assert!(base.violations().is_empty(), "violations: {:?}", base.violations());
    assert!(base.integrity_issues().is_empty(), "issues: {:?}", base.integrity_issues());
}

/// The two-sentence base used by the first three criteria.
fn figure1_base() -> ConceptBase {
    let mut base = ConceptBase::default();
    ingest_text(
        &mut base,
        "The black cat sat on the mat. The black cat drank some milk.",
        Some("cat"),
    );
    base
}

fn figure2_base() -> ConceptBase {
    let mut base = figure1_base();
    ingest_text(&mut base, "The thirsty boy drank some milk.", Some("boy"));
    ingest_text(&mut base, "The thirsty elephant drank some milk.", Some("elephant"));
    base
}

fn figure3_base() -> ConceptBase {
    let mut base = figure2_base();
    for _ in 0..3 {
        ingest_text(&mut base, "The thirsty elephant drank milk and ate grass.", Some("elephant"));
    }
    base
}

#[test]
fn acceptance_01_figure1_golden_tree() {
    // entity-free so the golden snapshot stays minimal
    let mut base = ConceptBase::default();
    ingest_text(&mut base, "The black cat sat on the mat. The black cat drank some milk.", None);

    assert_eq!(base.trees().count(), 1);
    let tree = base.tree_by_base("black").unwrap();
    let expect = [
        (vec!["black"], 2),
        (vec!["black", "cat"], 2),
        (vec!["black", "cat", "sat"], 1),
        (vec!["black", "cat", "sat", "mat"], 1),
        (vec!["black", "cat", "drank"], 1),
        (vec!["black", "cat", "drank", "milk"], 1),
    ];
    for (path, pos) in expect {
        assert_eq!(tree.node_at(&labels(&path)).unwrap().pos, pos, "at {:?}", path);
    }
    assert_eq!(tree.node_count(), 6);
    assert_clean(&base);

    let golden = include_bytes!("golden/fig1.cb");
    assert_eq!(
        snapshot_bytes(&base),
        golden.to_vec(),
        "snapshot drifted from the checked-in golden file"
    );
}

#[test]
fn acceptance_02_figure2_factoring() {
    let base = figure2_base();

    let drank = base.tree_by_base("drank").expect("shared branch factored into its own tree");
    assert_eq!(drank.base.pos, 3);
    assert_eq!(drank.node_at(&labels(&["drank", "milk"])).unwrap().pos, 3);

    let cat_tree = base.tree_by_base("black").unwrap();
    for (_, node) in cat_tree.walk() {
        assert_ne!(node.label, "drank");
        assert_ne!(node.label, "milk");
    }

    let inbound = base.link_index().inbound_links(drank.id);
    assert_eq!(inbound.len(), 3, "cat, boy and elephant branch ends all link to the drank tree");
    for key in &inbound {
        let link = base.link_index().link(*key).unwrap();
        assert_eq!(link.to_tree, drank.id);
    }
    assert_clean(&base);
}

#[test]
fn acceptance_03_figure3_keying() {
    let base = figure3_base();

    let ate = base.tree_by_base("ate").expect("grass branch keyed into its own tree");
    assert_eq!(ate.base.pos, 3);
    assert_eq!(ate.node_at(&labels(&["ate", "grass"])).unwrap().pos, 3);

    let reach = |entity: &str| -> BTreeSet<String> {
        query::traverse(&base, entity).paths.into_iter().flatten().collect()
    };
    let elephant = reach("elephant");
    assert!(elephant.contains("milk") && elephant.contains("grass"));
    let cat = reach("cat");
    assert!(cat.contains("milk") && !cat.contains("grass"));

    let required: BTreeSet<String> = ["milk".to_string(), "grass".to_string()].into();
    let qualifying: Vec<&str> = ["cat", "boy", "elephant"]
        .into_iter()
        .filter(|e| !query::query_all(&base, e, &required).unwrap().paths.is_empty())
        .collect();
    assert_eq!(qualifying, vec!["elephant"]);
    assert_clean(&base);
}

#[test]
fn acceptance_04_falsity_split() {
    let mut base = ConceptBase::default();
    base.ingest(SequenceEvent::new(labels(&["drank", "milk", "long", "trunk"]), 0, None).unwrap())
        .unwrap();
    let report = base
        .ingest(SequenceEvent::new(labels(&["drank", "milk"]), 1, None).unwrap())
        .unwrap();

    assert_eq!(report.splits.len(), 1, "exactly one split");
    assert_eq!(report.splits[0].1, labels(&["drank", "milk", "long"]));
    let long_tree = base.tree_by_base("long").expect("split tree");
    assert_eq!(long_tree.node_at(&labels(&["long", "trunk"])).unwrap().pos, 1);
    let link = base.link_index().links().next().unwrap();
    assert_eq!(link.from_path, labels(&["drank", "milk"]));
    assert_eq!(link.to_tree, long_tree.id);
    assert_clean(&base);

    // achieved ratio is 1; above it nothing splits
    let mut config = BaseConfig::default();
    config.falsity_ratio = 1.01;
    let mut strict = ConceptBase::new(config);
    strict
        .ingest(SequenceEvent::new(labels(&["drank", "milk", "long", "trunk"]), 0, None).unwrap())
        .unwrap();
    let report = strict
        .ingest(SequenceEvent::new(labels(&["drank", "milk"]), 1, None).unwrap())
        .unwrap();
    assert!(report.splits.is_empty());
    assert!(strict.tree_by_base("long").is_none());
}

#[test]
fn acceptance_05_energy_values() {
    assert_eq!(energy(&[8, 7, 6, 5, 4, 3, 2, 1]).unwrap(), 7);
    // one adjacent transposition of the descent
    assert_eq!(energy(&[8, 7, 6, 5, 4, 2, 3, 1]).unwrap(), 9);

    // brute force over all permutations of {1..7}: the descent is the
    // minimizer, unique up to reversal
    fn heap_permutations(values: &mut Vec<u64>, k: usize, visit: &mut impl FnMut(&[u64])) {
        if k == 1 {
            visit(values);
            return;
        }
        for i in 0..k {
            heap_permutations(values, k - 1, visit);
            if k % 2 == 0 {
                values.swap(i, k - 1);
            } else {
                values.swap(0, k - 1);
            }
        }
    }
    let mut values: Vec<u64> = (1..=7).collect();
    let mut minimizers: Vec<Vec<u64>> = Vec::new();
    let mut min = u64::MAX;
    let len = values.len();
    heap_permutations(&mut values, len, &mut |p| {
        let e = energy(p).unwrap();
        if e < min {
            min = e;
            minimizers.clear();
        }
        if e == min {
            minimizers.push(p.to_vec());
        }
    });
    assert_eq!(min, 6);
    minimizers.sort();
    let ascending: Vec<u64> = (1..=7).collect();
    let descending: Vec<u64> = (1..=7).rev().collect();
    assert_eq!(minimizers, vec![ascending, descending]);
}

#[test]
fn acceptance_06_invariants_hold_on_random_streams() {
    let mut rng = oracle::Rng::new(0x5eed_0006);
    for stream_no in 0..1000 {
        let mut base = ConceptBase::default();
        for (tick, event) in oracle::random_stream(&mut rng).into_iter().enumerate() {
            let event = SequenceEvent::new(event, tick as u64, None).unwrap();
            base.ingest(event).unwrap();
            for tree in base.trees() {
                let violations = tree::validate(tree);
                assert!(
                    violations.is_empty(),
                    "stream {} tick {}: {:?}",
                    stream_no,
                    tick,
                    violations
                );
            }
        }
        assert!(base.integrity_issues().is_empty(), "stream {}", stream_no);
    }
}

#[test]
fn acceptance_07_replay_oracle_equivalence() {
    let mut rng = oracle::Rng::new(0x5eed_0007);
    for stream_no in 0..300 {
        let mut base = ConceptBase::default();
        let stream = oracle::random_stream(&mut rng);
        for (tick, event) in stream.into_iter().enumerate() {
            let entity = ["cat", "boy", "elephant"][(tick % 3) as usize];
            let event = SequenceEvent::new(event, tick as u64, Some(entity.into())).unwrap();
            base.ingest(event).unwrap();
        }
        oracle::assert_counts_match_ledger_replay(&base, stream_no);
    }
}

#[test]
fn acceptance_08_confidence_normalization() {
    let mut rng = oracle::Rng::new(0x5eed_0008);
    let mut checked = 0usize;
    for _ in 0..100 {
        let mut base = ConceptBase::default();
        for (tick, event) in oracle::random_stream(&mut rng).into_iter().enumerate() {
            let event = SequenceEvent::new(event, tick as u64, None).unwrap();
            base.ingest(event).unwrap();
        }
        for tree in base.trees() {
            for (path, node) in tree.walk() {
                if node.children.is_empty() {
                    continue;
                }
                let child_share: f64 = node
                    .children
                    .iter()
                    .map(|c| query::concept_confidence(&base, &path, &c.label).unwrap())
                    .sum();
                let total = child_share + node.terminated as f64 / node.pos as f64;
                assert!(
                    (total - 1.0).abs() <= 1e-9,
                    "node {:?}: children plus terminated share is {}",
                    path,
                    total
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 100, "the streams must produce internal nodes to check");
}

#[test]
fn acceptance_09_determinism_and_persistence() {
    let mut rng = oracle::Rng::new(0x5eed_0009);
    for stream_no in 0..100 {
        let stream = oracle::random_stream(&mut rng);
        let build = || {
            let mut base = ConceptBase::default();
            for (tick, event) in stream.iter().enumerate() {
                let entity = ["cat", "boy"][(tick % 2) as usize];
                let event =
                    SequenceEvent::new(event.clone(), tick as u64, Some(entity.into())).unwrap();
                base.ingest(event).unwrap();
            }
            base
        };
        let first = snapshot_bytes(&build());
        let second = snapshot_bytes(&build());
        assert_eq!(first, second, "stream {}: identical inputs must serialize identically", stream_no);

        let loaded = snapshot::load(first.as_slice()).unwrap();
        assert_eq!(
            snapshot_bytes(&loaded),
            first,
            "stream {}: save-load-save must be a fixpoint",
            stream_no
        );
    }
}

#[test]
fn acceptance_10_rejoin_rules() {
    // a-i: equal entity references join automatically and remove the link
    let mut base = ConceptBase::default();
    base.ingest(SequenceEvent::new(labels(&["d", "m", "l", "t"]), 0, Some("e".into())).unwrap())
        .unwrap();
    base.ingest(SequenceEvent::new(labels(&["d", "m"]), 1, Some("e".into())).unwrap()).unwrap();
    let d = base.tree_by_base("d").unwrap().id;
    let l = base.tree_by_base("l").unwrap().id;
    let report = base.try_rejoin(d, l).unwrap();
    assert_eq!(report.rejoins, vec![(d, l)]);
    assert!(base.tree(l).is_none());
    assert!(base.link_index().links().next().is_none(), "the joining link is removed");
    assert!(base.tree(d).unwrap().node_at(&labels(&["d", "m", "l", "t"])).is_some());
    assert_clean(&base);

    // a-ii: an additional entity reference refuses the join and adds
    // compound evidence to the link
    let mut base = ConceptBase::default();
    base.ingest(SequenceEvent::new(labels(&["d", "m", "l", "t"]), 0, Some("e".into())).unwrap())
        .unwrap();
    base.ingest(SequenceEvent::new(labels(&["d", "m"]), 1, Some("e".into())).unwrap()).unwrap();
    let d = base.tree_by_base("d").unwrap().id;
    let l = base.tree_by_base("l").unwrap().id;
    let key = *base.link_index().inbound_links(l).iter().next().unwrap();
    let negative_before = base.link_index().link(key).unwrap().compound.1;
    base.grant("f", concept_base::GrantTarget::Key(key)).unwrap();
    let report = base.try_rejoin(d, l).unwrap();
    assert!(report.rejoins.is_empty());
    assert_eq!(report.refusals.len(), 1);
    assert!(base.tree(l).is_some(), "the split tree stays");
    assert_eq!(base.link_index().link(key).unwrap().compound.1, negative_before + 1);
    assert_clean(&base);

    // a-iii: the detached branch is wholly contained in the split tree, so
    // the join is automatic even though the reference sets differ
    let mut base = ConceptBase::default();
    base.ingest(SequenceEvent::new(labels(&["d", "m", "l", "t"]), 0, Some("e".into())).unwrap())
        .unwrap();
    base.ingest(SequenceEvent::new(labels(&["d", "m"]), 1, Some("f".into())).unwrap()).unwrap();
    let d = base.tree_by_base("d").unwrap().id;
    let l = base.tree_by_base("l").unwrap().id;
    assert_ne!(
        base.link_index().referencing_entities(d),
        base.link_index().referencing_entities(l)
    );
    let report = base.try_rejoin(d, l).unwrap();
    assert_eq!(report.rejoins, vec![(d, l)]);
    assert!(base.tree(l).is_none());
    assert_clean(&base);
}
