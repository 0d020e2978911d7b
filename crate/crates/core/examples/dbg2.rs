use concept_base::*;

struct Rng(u64);
impl Rng {
    fn new(seed: u64) -> Self { Rng(seed.max(1)) }
    fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12; x ^= x << 25; x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }
    fn below(&mut self, n: u64) -> u64 { self.next() % n }
}

fn random_stream(rng: &mut Rng) -> Vec<Vec<String>> {
    const ALPHABET: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
    let alphabet_size = 2 + rng.below(5) as usize;
    let event_count = 5 + rng.below(16) as usize;
    (0..event_count)
        .map(|_| {
            let len = 1 + rng.below(8) as usize;
            (0..len).map(|_| ALPHABET[rng.below(alphabet_size as u64) as usize].to_string()).collect()
        })
        .collect()
}

fn main() {
    let mut rng = Rng::new(0x5eed_0006);
    let stream = random_stream(&mut rng);
    let mut base = ConceptBase::default();
    for (tick, ev) in stream.iter().enumerate() {
        println!("-- ingest {:?}", ev);
        let event = SequenceEvent::new(ev.clone(), tick as u64, None).unwrap();
        base.ingest(event).unwrap();
        for v in base.violations() { println!("  VIOLATION {:?}", v); }
        for i in base.integrity_issues() { println!("  ISSUE {}", i); }
    }
    let mut out = Vec::new();
    save(&base, &mut out).unwrap();
    println!("{}", String::from_utf8(out).unwrap());
}
