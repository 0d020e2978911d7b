//! Text ingestion: turning raw text or event records into normalized
//! concept sequences, with optional knowledge-guided reordering.

use std::collections::BTreeMap;
use std::io::{self, BufRead};

use thiserror::Error;

/// Labels are lowercase tokens with no whitespace. `/` is reserved for
/// path encoding in snapshots and dumps.
pub fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && !label.contains('/')
        && label
            .chars()
            .all(|c| !c.is_whitespace() && !c.is_control() && !c.is_uppercase())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventError {
    #[error("event has no concepts")]
    Empty,
    #[error("invalid concept label {0:?}")]
    BadLabel(String),
    #[error("invalid entity id {0:?}")]
    BadEntity(String),
}

/// One ingestion unit: ordered concept labels plus a timestamp tick and
/// an optional entity identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceEvent {
    pub concepts: Vec<String>,
    pub timestamp: u64,
    pub entity: Option<String>,
}

impl SequenceEvent {
    pub fn new(
        concepts: Vec<String>,
        timestamp: u64,
        entity: Option<String>,
    ) -> Result<Self, EventError> {
        if concepts.is_empty() {
            return Err(EventError::Empty);
        }
        for c in &concepts {
            if !valid_label(c) {
                return Err(EventError::BadLabel(c.clone()));
            }
        }
        if let Some(e) = &entity {
            if e.is_empty() || e.contains('/') || e.chars().any(|c| c.is_whitespace() || c.is_control()) {
                return Err(EventError::BadEntity(e.clone()));
            }
        }
        Ok(SequenceEvent { concepts, timestamp, entity })
    }
}

/// Monotonic tick source for one ingestion session.
#[derive(Debug, Default, Clone)]
pub struct IngestClock {
    next: u64,
}

impl IngestClock {
    pub fn starting_at(tick: u64) -> Self {
        IngestClock { next: tick }
    }

    pub fn next_tick(&mut self) -> u64 {
        let t = self.next;
        self.next += 1;
        t
    }
}

/// Stop-word set used by [`tokenize`]. The default list covers English
/// articles, conjunctions, prepositions, pronouns, determiners and the
/// copula.
#[derive(Debug, Clone)]
pub struct StopWords(pub std::collections::BTreeSet<String>);

const DEFAULT_STOP_WORDS: &[&str] = &[
    // articles
    "a", "an", "the",
    // conjunctions
    "and", "but", "or", "nor", "so", "yet", "for", "because", "if", "while", "although",
    // prepositions
    "on", "in", "at", "to", "from", "with", "without", "of", "by", "about", "as", "into",
    "onto", "over", "under", "above", "below", "between", "through", "during", "before",
    "after", "against", "among", "around", "up", "down", "off", "out",
    // pronouns and determiners
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "my",
    "your", "his", "its", "our", "their", "mine", "yours", "hers", "ours", "theirs",
    "this", "that", "these", "those", "who", "whom", "whose", "which", "what", "some",
    "any", "no", "none", "each", "every", "all", "both", "few", "many", "much", "more",
    "most", "other", "another", "such", "there", "here", "then", "when", "where", "how",
    // copula
    "is", "are", "was", "were", "be", "been", "being", "am",
];

impl Default for StopWords {
    fn default() -> Self {
        StopWords(DEFAULT_STOP_WORDS.iter().map(|s| s.to_string()).collect())
    }
}

impl StopWords {
    pub fn empty() -> Self {
        StopWords(Default::default())
    }

    /// Reads a stop-word file: one lowercase word per line, `#` starts a
    /// comment, blank lines ignored.
    pub fn from_reader(r: impl BufRead) -> io::Result<Self> {
        let mut set = std::collections::BTreeSet::new();
        for line in r.lines() {
            let line = line?;
            let word = match line.split_once('#') {
                Some((before, _)) => before.trim(),
                None => line.trim(),
            };
            if !word.is_empty() {
                set.insert(word.to_lowercase());
            }
        }
        Ok(StopWords(set))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }
}

/// Integer band weights used by [`reorder`]; higher weighs heavier and
/// sorts toward the base. Unknown labels implicitly weigh 0.
#[derive(Debug, Clone, Default)]
pub struct OrderingLexicon {
    pub weights: BTreeMap<String, i64>,
}

impl OrderingLexicon {
    /// Reads a lexicon file of `word<TAB>integer` lines.
    pub fn from_reader(r: impl BufRead) -> io::Result<Self> {
        let mut weights = BTreeMap::new();
        for (no, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (word, weight) = line.split_once('\t').ok_or_else(|| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("lexicon line {}: missing tab separator", no + 1),
                )
            })?;
            let weight: i64 = weight.trim().parse().map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("lexicon line {}: bad weight: {}", no + 1, e),
                )
            })?;
            weights.insert(word.trim().to_lowercase(), weight);
        }
        Ok(OrderingLexicon { weights })
    }

    pub fn weight(&self, label: &str) -> i64 {
        self.weights.get(label).copied().unwrap_or(0)
    }
}

/// Splits `text` into lowercase tokens and drops stop words. Tokens break
/// on whitespace and punctuation; intra-word hyphens are kept.
pub fn tokenize(text: &str, stopwords: &StopWords) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut flush = |cur: &mut String| {
        let word = cur.trim_matches('-').to_string();
        cur.clear();
        if !word.is_empty() && !stopwords.contains(&word) {
            tokens.push(word);
        }
    };
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                cur.push(lc);
            }
        } else if ch == '-' && !cur.is_empty() {
            cur.push(ch);
        } else {
            flush(&mut cur);
        }
    }
    flush(&mut cur);
    tokens
}

/// Splits a document into sentences at `.`/`!`/`?`, tokenizes each one and
/// assigns ticks in sentence order. Sentences that filter to nothing are
/// dropped.
pub fn extract_sequences(
    document: &str,
    stopwords: &StopWords,
    clock: &mut IngestClock,
) -> Vec<SequenceEvent> {
    extract_sequences_for(document, stopwords, clock, None)
}

/// Same as [`extract_sequences`] with every event attributed to `entity`.
pub fn extract_sequences_for(
    document: &str,
    stopwords: &StopWords,
    clock: &mut IngestClock,
    entity: Option<&str>,
) -> Vec<SequenceEvent> {
    document
        .split(['.', '!', '?'])
        .filter_map(|sentence| {
            let concepts = tokenize(sentence, stopwords);
            if concepts.is_empty() {
                return None;
            }
            Some(SequenceEvent {
                concepts,
                timestamp: clock.next_tick(),
                entity: entity.map(|e| e.to_string()),
            })
        })
        .collect()
}

/// Stable sort of the event's concepts by descending lexicon weight; ties
/// keep their original order. Reordering is ingestion-time only so the
/// triangular count rule of a built tree is never overridden.
pub fn reorder(event: &SequenceEvent, lexicon: &OrderingLexicon) -> SequenceEvent {
    let mut out = event.clone();
    out.concepts.sort_by_key(|c| std::cmp::Reverse(lexicon.weight(c)));
    out
}

/// Exact multiset count over all concepts in all events.
pub fn bag_of_words(events: &[SequenceEvent]) -> BTreeMap<String, u64> {
    let mut bag = BTreeMap::new();
    for event in events {
        for c in &event.concepts {
            *bag.entry(c.clone()).or_insert(0) += 1;
        }
    }
    bag
}
