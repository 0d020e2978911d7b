use concept_base::*;

fn main() {
    let mut base = ConceptBase::default();
    let stopwords = StopWords::default();
    let mut clock = IngestClock::default();
    for event in extract_sequences(
        "The black cat sat on the mat. The black cat drank some milk.",
        &stopwords,
        &mut clock,
    ) {
        base.ingest(event).unwrap();
    }
    let mut out = Vec::new();
    save(&base, &mut out).unwrap();
    print!("{}", String::from_utf8(out).unwrap());
}
