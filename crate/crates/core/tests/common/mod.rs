#![allow(dead_code)]

use std::path::PathBuf;

use leakaudit::corpus_io::{
    parse_queries, parse_sheet, parse_topics, read_embeddings, EmbeddingMatrix, LeakageCandidate, QueryCollection,
    QueryFormat, Source, TopicSet,
};

/// Seed of the checked-in audit fixture.
pub const AUDIT_SEED: u64 = 20_230_723;

pub fn audit_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/audit")
}

pub struct Audit {
    pub queries: QueryCollection,
    pub query_embeddings: EmbeddingMatrix,
    pub topics: TopicSet,
    pub topic_embeddings: EmbeddingMatrix,
    pub truth: Vec<LeakageCandidate>,
}

pub fn load_audit() -> Audit {
    let d = audit_dir();
    Audit {
        queries: parse_queries(&d.join("queries.jsonl"), QueryFormat::Jsonl(Source::Other)).unwrap(),
        query_embeddings: read_embeddings(&d.join("queries.emb"), &d.join("queries.emb.ids")).unwrap(),
        topics: parse_topics(&d.join("topics.jsonl")).unwrap(),
        topic_embeddings: read_embeddings(&d.join("topics.emb"), &d.join("topics.emb.ids")).unwrap(),
        truth: parse_sheet(&d.join("truth.csv")).unwrap(),
    }
}

impl Audit {
    pub fn is_leak(&self, topic: &str, query: &str) -> bool {
        self.truth
            .iter()
            .any(|r| r.topic_id == topic && r.query_id == query && r.label == Some(true))
    }
}
