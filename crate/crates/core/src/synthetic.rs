//! Seeded synthetic corpora with known ground truth, used by tests,
//! benchmarks and the checked-in fixtures.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus_io::{
    sheet_to_csv, write_embeddings, EmbeddingMatrix, LeakageCandidate, Qrels, Query, QueryCollection, Reformulation,
    Run, RunEntry, Source, Topic, TopicField, TopicSet,
};
use crate::dataset_builder::{QueryPool, Scenario, ScenarioInputs};
use crate::embed_index::normalize;
use crate::error::{Error, Result};
use crate::leakage_id::topic_row_id;
use crate::seed;

/// Random unit vector with uniform(-1, 1) components before scaling.
pub fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if let Some(n) = normalize(&v) {
            return n;
        }
    }
}

/// `rows × dim` matrix of unit rows with ids `{prefix}{i}`.
pub fn random_unit_matrix(rows: usize, dim: usize, prefix: &str, seed: u64) -> EmbeddingMatrix {
    let mut rng = seed::rng(seed);
    let width = rows.to_string().len();
    let ids = (0..rows).map(|i| format!("{prefix}{i:0width$}")).collect();
    let data = (0..rows).flat_map(|_| unit_vector(&mut rng, dim)).collect();
    EmbeddingMatrix::new(dim, ids, data).expect("well-formed synthetic matrix")
}

/// Pronounceable pseudo-words, all distinct and free of inflection endings.
fn vocabulary(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z", "br", "tr", "pl"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
        }
        w.push_str(["k", "m", "t", "x", "l"][rng.random_range(0..5)]);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    pub queries: usize,
    pub topics: usize,
    pub variants: usize,
    pub dim: usize,
    pub planted: usize,
    /// Scale of the uniform noise added to a topic row to make a planted query.
    pub epsilon: f32,
    /// Non-leaking look-alikes come in groups of surface variants of one
    /// query (case, punctuation, spacing) that share a single embedding.
    pub distractor_groups: usize,
    pub group_size: usize,
    /// Similarity of the first group; each further group sits 0.02 higher.
    pub distractor_similarity: f32,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            queries: 1000,
            topics: 20,
            variants: 2,
            dim: 64,
            planted: 30,
            epsilon: 1e-3,
            distractor_groups: 5,
            group_size: 4,
            distractor_similarity: 0.82,
        }
    }
}

/// A constructed (topic, query) relation.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPair {
    pub topic_id: String,
    pub query_id: String,
    pub field: TopicField,
    pub reformulation: Reformulation,
}

impl PlantedPair {
    pub fn is_leak(&self) -> bool {
        self.reformulation.is_leak()
    }
}

/// Training queries, topics and embeddings with planted near-duplicates
/// (true leaks) and moderately similar distractors (non-leaks).
#[derive(Debug, Clone)]
pub struct AuditFixture {
    pub queries: QueryCollection,
    pub query_embeddings: EmbeddingMatrix,
    pub topics: TopicSet,
    pub topic_embeddings: EmbeddingMatrix,
    pub pairs: Vec<PlantedPair>,
}

impl AuditFixture {
    pub fn leaks(&self) -> impl Iterator<Item = &PlantedPair> {
        self.pairs.iter().filter(|p| p.is_leak())
    }

    /// Ground-truth label of a pair: true for planted leaks, false for
    /// everything else.
    pub fn truth(&self, topic_id: &str, query_id: &str) -> bool {
        self.leaks().any(|p| p.topic_id == topic_id && p.query_id == query_id)
    }

    /// Labeled sheet of every constructed pair with its exact similarity.
    pub fn truth_sheet(&self) -> Vec<LeakageCandidate> {
        let row = |m: &EmbeddingMatrix, id: &str| {
            let i = m.ids().iter().position(|x| x == id).expect("id present");
            m.row(i).to_vec()
        };
        self.pairs
            .iter()
            .map(|p| {
                let t = row(&self.topic_embeddings, &topic_row_id(&p.topic_id, p.field));
                let q = row(&self.query_embeddings, &p.query_id);
                let mut s = 0.0f32;
                for (a, b) in q.iter().zip(&t) {
                    s += a * b;
                }
                LeakageCandidate {
                    topic_id: p.topic_id.clone(),
                    query_id: p.query_id.clone(),
                    field: p.field,
                    similarity: s.clamp(-1.0, 1.0),
                    label: Some(p.is_leak()),
                    reformulation: Some(p.reformulation),
                }
            })
            .collect()
    }

    /// Writes `queries.jsonl`, `topics.jsonl`, `queries.emb(.ids)`,
    /// `topics.emb(.ids)` and the labeled `truth.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        put("queries.jsonl", self.queries.to_jsonl().as_bytes())?;
        put("topics.jsonl", self.topics.to_jsonl().as_bytes())?;
        put("truth.csv", &sheet_to_csv(&self.truth_sheet()))?;
        write_embeddings(&self.query_embeddings, &dir.join("queries.emb"), &dir.join("queries.emb.ids"))?;
        write_embeddings(&self.topic_embeddings, &dir.join("topics.emb"), &dir.join("topics.emb.ids"))
    }
}

pub fn audit_fixture(config: &AuditConfig, seed: u64) -> AuditFixture {
    let mut rng = seed::derived_rng(seed, "synthetic/audit");
    let vocab = vocabulary(&mut rng, 8 * config.topics + 4 * config.queries);
    let mut words = vocab.iter();
    let mut phrase = |n: usize| words.by_ref().take(n).cloned().collect::<Vec<_>>().join(" ");

    let topics: Vec<Topic> = (0..config.topics)
        .map(|t| Topic {
            topic_id: format!("{}", 301 + t),
            title: phrase(2),
            description: format!("find documents about {}", phrase(2)),
            narrative: String::new(),
            variants: (0..config.variants).map(|_| phrase(2)).collect(),
        })
        .collect();

    let mut topic_ids = Vec::new();
    let mut topic_rows = Vec::new();
    let mut fields: Vec<(usize, TopicField)> = Vec::new();
    for (ti, t) in topics.iter().enumerate() {
        let mut fs = vec![TopicField::Title, TopicField::Description];
        fs.extend((0..t.variants.len() as u32).map(TopicField::Variant));
        for f in fs {
            topic_ids.push(topic_row_id(&t.topic_id, f));
            topic_rows.push(unit_vector(&mut rng, config.dim));
            fields.push((ti, f));
        }
    }

    let mut query_rows: Vec<Vec<f32>> = (0..config.queries).map(|_| unit_vector(&mut rng, config.dim)).collect();
    let mut texts: Vec<String> = (0..config.queries).map(|i| phrase(2 + i % 3)).collect();
    let width = config.queries.to_string().len();
    let query_id = |i: usize| format!("q{i:0width$}");

    let n_distractors = config.distractor_groups * config.group_size;
    let special = index::sample(&mut rng, config.queries, config.planted + n_distractors).into_vec();
    let field_slots = |ti: usize| fields.iter().enumerate().filter(move |(_, (t, _))| *t == ti).map(|(i, _)| i);
    let mut pairs = Vec::new();
    for (j, &qi) in special[..config.planted].iter().enumerate() {
        // walk topics first, then fields, so every topic leaks
        let ti = j % config.topics;
        let slots: Vec<usize> = field_slots(ti).collect();
        let slot = slots[(j / config.topics) % slots.len()];
        let title = &topics[ti].title;
        let reformulation = Reformulation::ALL[j % 4];
        let extra = phrase(1);
        texts[qi] = match reformulation {
            Reformulation::Identical => title.to_uppercase(),
            Reformulation::Generalization => title.split(' ').next().unwrap().to_string(),
            Reformulation::Specialization => format!("{title} {extra}"),
            _ => phrase(2),
        };
        let noisy: Vec<f32> = topic_rows[slot]
            .iter()
            .map(|v| v + config.epsilon * rng.random_range(-1.0f32..1.0))
            .collect();
        query_rows[qi] = normalize(&noisy).unwrap();
        pairs.push(PlantedPair {
            topic_id: topics[ti].topic_id.clone(),
            query_id: query_id(qi),
            field: fields[slot].1,
            reformulation,
        });
    }
    for (g, members) in special[config.planted..].chunks(config.group_size).enumerate() {
        let ti = (config.topics - 1 - g) % config.topics;
        let slots: Vec<usize> = field_slots(ti).collect();
        let slot = slots[slots.len() - 1 - g % slots.len()];
        let base = &topic_rows[slot];
        let r = unit_vector(&mut rng, config.dim);
        let dot: f32 = r.iter().zip(base).map(|(a, b)| a * b).sum();
        let orth = normalize(&r.iter().zip(base).map(|(a, b)| a - dot * b).collect::<Vec<_>>()).unwrap();
        let c = config.distractor_similarity + 0.02 * g as f32;
        let s = (1.0 - c * c).sqrt();
        let shared = normalize(&base.iter().zip(&orth).map(|(b, o)| c * b + s * o).collect::<Vec<_>>()).unwrap();
        let text = phrase(2);
        for (m, &qi) in members.iter().enumerate() {
            texts[qi] = match m % 4 {
                0 => text.clone(),
                1 => text.to_uppercase(),
                2 => format!("{text}?"),
                _ => text.replace(' ', "  "),
            };
            query_rows[qi] = shared.clone();
            pairs.push(PlantedPair {
                topic_id: topics[ti].topic_id.clone(),
                query_id: query_id(qi),
                field: fields[slot].1,
                reformulation: Reformulation::DifferentTopic,
            });
        }
    }
    pairs.sort_by(|a, b| (&a.topic_id, &a.query_id).cmp(&(&b.topic_id, &b.query_id)));

    let queries = QueryCollection::new(
        texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Query {
                id: query_id(i),
                text,
                source: if i % 2 == 0 { Source::Msm } else { Source::Orcas },
            })
            .collect(),
    )
    .expect("unique synthetic queries");
    AuditFixture {
        query_embeddings: EmbeddingMatrix::new(config.dim, (0..config.queries).map(query_id).collect(), query_rows.concat())
            .expect("well-formed"),
        topic_embeddings: EmbeddingMatrix::new(config.dim, topic_ids, topic_rows.concat()).expect("well-formed"),
        topics: TopicSet::new(topics).expect("unique synthetic topics"),
        queries,
        pairs,
    }
}

/// Inputs for one synthetic grid scenario.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub scenario: Scenario,
    pub topics: TopicSet,
    pub qrels: Qrels,
    pub candidates: Vec<LeakageCandidate>,
    pub exclusions: BTreeSet<String>,
}

impl ScenarioData {
    pub fn inputs(&self) -> ScenarioInputs<'_> {
        ScenarioInputs {
            scenario: self.scenario,
            topics: &self.topics,
            qrels: &self.qrels,
            verified_leaks: &self.candidates,
            exclusions: &self.exclusions,
        }
    }
}

/// A training-query pool with judgments and short runs, plus three
/// benchmark scenarios sized for the full dataset grid.
#[derive(Debug, Clone)]
pub struct GridFixture {
    pub queries: QueryCollection,
    pub positives: Qrels,
    pub runs: Run,
    pub scenarios: Vec<ScenarioData>,
}

impl GridFixture {
    pub fn pool(&self) -> QueryPool {
        QueryPool::new(&self.queries, &self.positives, &self.runs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    /// Queries per source (MS MARCO and ORCAS each).
    pub per_source: usize,
    pub run_depth: usize,
    /// Judged topics that lack a second relevant document.
    pub thin_topics: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            per_source: 33_000,
            run_depth: 5,
            thin_topics: 2,
        }
    }
}

pub fn grid_fixture(config: &GridConfig, seed: u64) -> GridFixture {
    let mut rng = seed::derived_rng(seed, "synthetic/grid");
    let n = 2 * config.per_source;
    let mut queries = Vec::with_capacity(n);
    let mut positives = Qrels::new();
    let mut runs = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("tq{i:06}");
        queries.push(Query {
            id: id.clone(),
            text: format!("training query {i}"),
            source: if i % 2 == 0 { Source::Msm } else { Source::Orcas },
        });
        let pos = format!("D{i:06}");
        positives.insert(&id, &pos, 1).expect("fresh key");
        // the positive is retrieved for half the queries
        let start = usize::from(i % 2 == 1);
        let entries = (start..start + config.run_depth)
            .map(|r| {
                let doc = if r == 0 { pos.clone() } else { format!("D{:06}", (i * 7 + r * 131) % (n + 1000)) };
                RunEntry::new(doc, (r - start) as u32 + 1, 30.0 - r as f64, "bm25")
            })
            .collect::<Vec<_>>();
        let mut seen = BTreeSet::new();
        let entries = entries.into_iter().filter(|e| seen.insert(e.doc_id.clone())).collect();
        runs.push((id, entries));
    }

    let scenarios = Scenario::ALL
        .iter()
        .map(|&scenario| {
            let leaked = scenario.leaked_query_count();
            let n_topics = leaked / 2 + config.thin_topics;
            let mut topics = Vec::with_capacity(n_topics);
            let mut qrels = Qrels::new();
            for t in 0..n_topics {
                let id = format!("{}-{}", scenario.slug(), 301 + t);
                topics.push(Topic {
                    topic_id: id.clone(),
                    title: format!("{} topic {t}", scenario.slug()),
                    description: String::new(),
                    narrative: String::new(),
                    variants: vec![],
                });
                let rel = if t < config.thin_topics { 1 } else { 3 };
                for d in 0..rel {
                    qrels.insert(&id, &format!("{id}-R{d}"), 1 + d as u32 % 2).expect("fresh key");
                }
                for d in 0..3 {
                    qrels.insert(&id, &format!("{id}-N{d}"), 0).expect("fresh key");
                }
            }
            let topic_ids: Vec<String> = topics.iter().map(|t| t.topic_id.clone()).collect();
            let verified = leaked + leaked / 5;
            let unverified = leaked / 2;
            let picks = index::sample(&mut rng, n, verified + unverified).into_vec();
            let candidates: Vec<LeakageCandidate> = picks
                .iter()
                .enumerate()
                .map(|(j, &qi)| LeakageCandidate {
                    topic_id: topic_ids[j % topic_ids.len()].clone(),
                    query_id: format!("tq{qi:06}"),
                    field: TopicField::Title,
                    similarity: if j < verified { 0.95 } else { 0.85 },
                    label: (j < verified || j % 2 == 0).then_some(j < verified),
                    reformulation: None,
                })
                .collect();
            let exclusions = candidates.iter().map(|c| c.query_id.clone()).collect();
            ScenarioData {
                scenario,
                topics: TopicSet::new(topics).expect("unique"),
                qrels,
                candidates,
                exclusions,
            }
        })
        .collect();

    GridFixture {
        queries: QueryCollection::new(queries).expect("unique"),
        positives,
        runs: Run::from_topics(runs).expect("unique"),
        scenarios,
    }
}

/// Random (run, qrels) pair: `topics` topics, up to `depth` ranked docs
/// each, integer scores in a small range so ties are common, grades 0..=3.
pub fn random_run_qrels(rng: &mut ChaCha8Rng, topics: usize, depth: usize) -> (Run, Qrels) {
    let mut qrels = Qrels::new();
    let mut run = Vec::new();
    for t in 0..topics {
        let tid = format!("t{t}");
        let pool = rng.random_range(1..=depth * 2);
        let ranked = rng.random_range(0..=depth.min(pool));
        let docs: Vec<String> = (0..pool).map(|d| format!("d{d}")).collect();
        for d in &docs {
            if rng.random_bool(0.5) {
                qrels.insert(&tid, d, rng.random_range(0..=3)).expect("fresh key");
            }
        }
        let chosen = index::sample(rng, pool, ranked).into_vec();
        let entries = chosen
            .iter()
            .enumerate()
            .map(|(r, &d)| RunEntry::new(docs[d].clone(), r as u32 + 1, f64::from(rng.random_range(0..5u8)), "x"))
            .collect();
        run.push((tid, entries));
    }
    (Run::from_topics(run).expect("unique"), qrels)
}

/// Counts, per topic, of the distinct leaking queries by field group.
pub fn expected_report_counts(pairs: &[PlantedPair]) -> BTreeMap<&'static str, (usize, usize)> {
    let mut out = BTreeMap::new();
    for (name, pred) in crate::leakage_id::FIELD_GROUPS {
        let sel: Vec<&PlantedPair> = pairs.iter().filter(|p| p.is_leak() && pred(&p.field)).collect();
        let t: BTreeSet<&str> = sel.iter().map(|p| p.topic_id.as_str()).collect();
        let q: BTreeSet<&str> = sel.iter().map(|p| p.query_id.as_str()).collect();
        out.insert(name, (t.len(), q.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage_id::classify_reformulation;

    #[test]
    fn audit_fixture_construction() {
        let cfg = AuditConfig::default();
        let fx = audit_fixture(&cfg, 7);
        assert_eq!(fx.queries.len(), 1000);
        assert_eq!(fx.topics.len(), 20);
        assert_eq!(fx.topic_embeddings.count(), 80);
        assert_eq!(fx.leaks().count(), 30);
        assert_eq!(fx.pairs.len(), 50);
        let msm = fx.queries.entries().iter().filter(|q| q.source == Source::Msm).count();
        assert_eq!(msm, 500);
        for row in fx.truth_sheet() {
            if row.label == Some(true) {
                assert!(row.similarity > 0.999, "{row:?}");
                let p = fx.pairs.iter().find(|p| p.query_id == row.query_id).unwrap();
                let title = &fx.topics.get(&p.topic_id).unwrap().title;
                let text = &fx.queries.get(&p.query_id).unwrap().text;
                assert_eq!(classify_reformulation(title, text, row.similarity, 0.91), p.reformulation);
            } else {
                assert!((0.8..0.91).contains(&row.similarity), "{row:?}");
            }
        }
        let again = audit_fixture(&cfg, 7);
        assert_eq!(again.query_embeddings, fx.query_embeddings);
        assert_eq!(again.pairs, fx.pairs);
    }

    #[test]
    fn small_grid_fixture_is_usable() {
        let g = grid_fixture(
            &GridConfig {
                per_source: 500,
                ..Default::default()
            },
            1,
        );
        let pool = g.pool();
        assert_eq!(pool.len(), 1000);
        assert_eq!(g.scenarios.len(), 3);
        let robust = &g.scenarios[0];
        assert_eq!(robust.topics.len(), 252);
        assert_eq!(robust.candidates.iter().filter(|c| c.label == Some(true)).count(), 600);
    }
}
