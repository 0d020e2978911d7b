//! A self-organizing concept base: counted trees grown from concept
//! sequences, restructured by factoring and falsity splits, indexed by
//! keyed links and per-entity keysets.
//!
//! Sequences reinforce a tree only from its base, so counts always narrow
//! from base to leaves (the triangular rule) and for every node the child
//! counts plus terminations equal its own count. Content duplicated across
//! trees is factored into one tree and referenced by links; branches whose
//! negative evidence outweighs the positive split off behind a link; and
//! split trees can re-join when the entity references allow it.
//!
//! Mutations go through one exclusive writer (`&mut ConceptBase`); queries
//! and metrics are read-only over a snapshot.

pub mod base;
pub mod config;
pub mod dot;
pub mod ingest;
pub mod links;
pub mod metrics;
pub mod query;
pub mod snapshot;
pub mod tree;

pub use base::{BaseError, ConceptBase, RestructureReport};
pub use config::BaseConfig;
pub use ingest::{
    bag_of_words, extract_sequences, extract_sequences_for, reorder, tokenize, IngestClock,
    OrderingLexicon, SequenceEvent, StopWords,
};
pub use links::{EntityKeyset, GrantTarget, Link, LinkError, LinkIndex, LinkKey};
pub use metrics::{energy, stats, tree_energy, ForestStats, MetricsError};
pub use query::{concept_confidence, query_all, traverse, traverse_with_trace, QueryError, QueryResult};
pub use snapshot::{load, save, SnapshotError};
pub use tree::{
    add_from_base, detach_branch, match_prefix, reattach_branch, validate, AddOutcome,
    ConceptNode, ConceptTree, TreeError, TreeId, Violation, ViolationKind,
};
