mod common;

use leakaudit::synthetic::{audit_fixture, AuditConfig};

/// The checked-in audit fixture is exactly what the generator produces.
/// Set `LEAKAUDIT_REGENERATE_FIXTURES=1` to rewrite it.
#[test]
fn audit_fixture_matches_generator() {
    let fx = audit_fixture(&AuditConfig::default(), common::AUDIT_SEED);
    if std::env::var_os("LEAKAUDIT_REGENERATE_FIXTURES").is_some() {
        fx.write(&common::audit_dir()).unwrap();
    }
    let tmp = tempfile::tempdir().unwrap();
    fx.write(tmp.path()).unwrap();
    for name in ["queries.jsonl", "topics.jsonl", "truth.csv", "queries.emb", "queries.emb.ids", "topics.emb", "topics.emb.ids"] {
        let fresh = std::fs::read(tmp.path().join(name)).unwrap();
        let checked_in = std::fs::read(common::audit_dir().join(name)).unwrap();
        assert!(fresh == checked_in, "{name} differs from the generator output");
    }
}

#[test]
fn audit_fixture_loads() {
    let a = common::load_audit();
    assert_eq!(a.queries.len(), 1000);
    assert_eq!(a.query_embeddings.count(), 1000);
    assert_eq!(a.query_embeddings.dim(), 64);
    assert_eq!(a.topics.len(), 20);
    assert_eq!(a.topic_embeddings.count(), 80);
    assert_eq!(a.truth.iter().filter(|r| r.label == Some(true)).count(), 30);
}
