use concept_base::*;

fn labels(v: &[&str]) -> Vec<String> { v.iter().map(|s| s.to_string()).collect() }

fn main() {
    let mut base = ConceptBase::default();
    let events: &[(&[&str], &str)] = &[
        (&["black", "cat", "sat", "mat"], "cat"),
        (&["black", "cat", "drank", "milk"], "cat"),
        (&["thirsty", "boy", "drank", "milk"], "boy"),
        (&["thirsty", "elephant", "drank", "milk"], "elephant"),
        (&["thirsty", "elephant", "drank", "milk", "ate", "grass"], "elephant"),
        (&["thirsty", "elephant", "drank", "milk", "ate", "grass"], "elephant"),
        (&["thirsty", "elephant", "drank", "milk", "ate", "grass"], "elephant"),
    ];
    for (i, (concepts, entity)) in events.iter().enumerate() {
        let event = SequenceEvent::new(labels(concepts), i as u64, Some(entity.to_string())).unwrap();
        let report = base.ingest(event).unwrap();
        println!("== after event {} ==\n{}", i, report);
    }
    let mut out = Vec::new();
    save(&base, &mut out).unwrap();
    println!("{}", String::from_utf8(out).unwrap());
    for e in ["cat", "boy", "elephant"] {
        println!("resolve {} = {:?}", e, base.link_index().resolve(e));
        let r = traverse(&base, e);
        println!("traverse {} paths = {:?}", e, r.paths);
    }
}
