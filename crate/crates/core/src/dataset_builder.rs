//! Controlled training sets: no leakage, leakage of verified training-log
//! queries, and leakage of the test topics themselves.
//!
//! A training record is one query with one relevant and one non-relevant
//! document, so a dataset of `size_instances` instances holds
//! `size_instances / 2` records. Leaked records are chosen independently of
//! the size, which keeps them identical across the eight sizes of a family.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{
    sha256_hex, InstanceSource, LeakageCandidate, QueryCollection, Qrels, Run, RunEntry, TopicSet, TrainingInstance,
    TrainingSet,
};
use crate::error::{Error, Result};
use crate::eval::sort_ties;
use crate::{par, seed};

pub const GRID_SIZES: [usize; 8] = [1000, 2000, 4000, 8000, 16000, 32000, 64000, 128000];
/// Negatives are drawn from this many top-ranked documents.
pub const NEGATIVE_DEPTH: usize = 100;
/// Prefix of training query ids built from test topics.
pub const TEST_QUERY_PREFIX: &str = "topic:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scenario {
    Robust04,
    Cc17,
    Cc18,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Robust04, Scenario::Cc17, Scenario::Cc18];

    pub fn slug(self) -> &'static str {
        match self {
            Scenario::Robust04 => "robust04",
            Scenario::Cc17 => "cc17",
            Scenario::Cc18 => "cc18",
        }
    }

    /// Leaked training queries per leakage dataset.
    pub fn leaked_query_count(self) -> usize {
        match self {
            Scenario::Robust04 => 500,
            Scenario::Cc17 | Scenario::Cc18 => 100,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.slug().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scenario {s:?} (expected robust04, cc17 or cc18)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Kind {
    NoLeakage,
    MsmLeakage,
    TestLeakage,
}

impl Kind {
    pub const ALL: [Kind; 3] = [Kind::NoLeakage, Kind::MsmLeakage, Kind::TestLeakage];

    pub fn slug(self) -> &'static str {
        match self {
            Kind::NoLeakage => "no-leakage",
            Kind::MsmLeakage => "msm-leakage",
            Kind::TestLeakage => "test-leakage",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl std::str::FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Kind::ALL
            .into_iter()
            .find(|x| x.slug() == s)
            .ok_or_else(|| format!("unknown dataset kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub scenario: Scenario,
    pub kind: Kind,
    pub size_instances: usize,
    pub leaked_query_count: usize,
    pub seed: u64,
}

impl DatasetSpec {
    /// A grid spec; the size must be one of [`GRID_SIZES`].
    pub fn new(scenario: Scenario, kind: Kind, size_instances: usize, seed: u64) -> Result<Self> {
        if !GRID_SIZES.contains(&size_instances) {
            return Err(Error::invalid(
                "dataset-builder",
                format!("size {size_instances} is not one of {GRID_SIZES:?}"),
            ));
        }
        Ok(Self::custom(scenario, kind, size_instances, seed))
    }

    /// Any even size, with the scenario's leaked count. Meant for small
    /// experiments and tests.
    pub fn custom(scenario: Scenario, kind: Kind, size_instances: usize, seed: u64) -> Self {
        let leaked_query_count = match kind {
            Kind::NoLeakage => 0,
            _ => scenario.leaked_query_count(),
        };
        DatasetSpec {
            scenario,
            kind,
            size_instances,
            leaked_query_count,
            seed,
        }
    }

    pub fn with_leaked(mut self, leaked_query_count: usize) -> Self {
        self.leaked_query_count = leaked_query_count;
        self
    }

    pub fn query_count(&self) -> usize {
        self.size_instances / 2
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.jsonl", self.scenario, self.kind, self.size_instances)
    }

    fn check(&self) -> Result<()> {
        if !self.size_instances.is_multiple_of(2) {
            return Err(self.fail(format!("size {} is odd", self.size_instances)));
        }
        if (self.kind == Kind::NoLeakage) != (self.leaked_query_count == 0) {
            return Err(self.fail("leaked count must be zero exactly for no-leakage datasets".into()));
        }
        if self.leaked_query_count > self.query_count() {
            return Err(self.fail(format!(
                "{} leaked queries exceed {} total queries",
                self.leaked_query_count,
                self.query_count()
            )));
        }
        if self.kind == Kind::TestLeakage && !self.leaked_query_count.is_multiple_of(2) {
            return Err(self.fail("test leakage needs an even leaked count".into()));
        }
        Ok(())
    }

    fn fail(&self, msg: String) -> Error {
        Error::invalid("dataset-builder", format!("{}: {msg}", self.file_name()))
    }
}

/// Documents eligible as negatives: the top [`NEGATIVE_DEPTH`] of the run
/// in canonical order, minus known positives.
pub fn negative_candidates(run_for_query: &[RunEntry], is_positive: impl Fn(&str) -> bool) -> Vec<String> {
    sort_ties(run_for_query)
        .into_iter()
        .take(NEGATIVE_DEPTH)
        .filter(|e| !is_positive(&e.doc_id))
        .map(|e| e.doc_id)
        .collect()
}

fn pick<'a>(items: &'a [String], seed: u64, label: &str) -> &'a String {
    let mut rng = seed::derived_rng(seed, label);
    &items[rng.random_range(0..items.len())]
}

/// Uniform draw from the top [`NEGATIVE_DEPTH`] run documents that are not
/// known positives. Deterministic in (`query_id`, `seed`).
pub fn sample_negative(
    query_id: &str,
    run_for_query: &[RunEntry],
    known_positives: &BTreeSet<String>,
    seed: u64,
) -> Result<String> {
    let candidates = negative_candidates(run_for_query, |d| known_positives.contains(d));
    if candidates.is_empty() {
        return Err(Error::invalid(
            "dataset-builder",
            format!("query {query_id:?}: no run document outside the known positives"),
        ));
    }
    Ok(pick(&candidates, seed, &format!("negative/{query_id}")).clone())
}

#[derive(Debug, Clone)]
struct PoolQuery {
    text: String,
    source: InstanceSource,
    positives: Vec<String>,
    negatives: Vec<String>,
}

/// Training-log queries that can form a record: a known source, at least
/// one judged positive, and a run with at least one usable negative.
#[derive(Debug, Clone, Default)]
pub struct QueryPool {
    entries: BTreeMap<String, PoolQuery>,
    skipped: usize,
}

impl QueryPool {
    /// `positives` holds training judgments keyed by query id; grades ≥ 1
    /// count as relevant.
    pub fn new(queries: &QueryCollection, positives: &Qrels, runs: &Run) -> Self {
        let mut entries = BTreeMap::new();
        let mut skipped = 0;
        for q in queries.entries() {
            let usable = (|| {
                let source = InstanceSource::from_query_source(q.source)?;
                let pos: Vec<String> = positives
                    .topic(&q.id)?
                    .iter()
                    .filter(|(_, &g)| g >= 1)
                    .map(|(d, _)| d.clone())
                    .collect();
                if pos.is_empty() {
                    return None;
                }
                let negatives = negative_candidates(runs.topic(&q.id)?, |d| pos.binary_search_by(|p| p.as_str().cmp(d)).is_ok());
                (!negatives.is_empty()).then(|| PoolQuery {
                    text: q.text.clone(),
                    source,
                    positives: pos,
                    negatives,
                })
            })();
            match usable {
                Some(p) => {
                    entries.insert(q.id.clone(), p);
                }
                None => skipped += 1,
            }
        }
        if skipped > 0 {
            log::info!("dataset-builder: {skipped} queries lack a source, a positive or a negative and are not usable");
        }
        QueryPool { entries, skipped }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Queries left out because they could not form a record.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn contains(&self, query_id: &str) -> bool {
        self.entries.contains_key(query_id)
    }

    fn instance(&self, query_id: &str, seed: u64, leak_topic: Option<&str>) -> TrainingInstance {
        let q = &self.entries[query_id];
        let pos = if q.positives.len() == 1 {
            &q.positives[0]
        } else {
            pick(&q.positives, seed, &format!("positive/{query_id}"))
        };
        TrainingInstance {
            query_id: query_id.to_string(),
            query_text: q.text.clone(),
            pos_doc_id: pos.clone(),
            neg_doc_id: pick(&q.negatives, seed, &format!("negative/{query_id}")).clone(),
            source: q.source,
            leaked: leak_topic.is_some(),
            leak_topic_id: leak_topic.map(str::to_string),
        }
    }

    /// `n` non-excluded queries, `ceil(n/2)` from MS MARCO and the rest
    /// from ORCAS, each side sampled without replacement.
    fn fill(&self, n: usize, excluded: impl Fn(&str) -> bool, seed: u64, what: &str) -> Result<Vec<TrainingInstance>> {
        let mut msm = Vec::new();
        let mut orcas = Vec::new();
        for (id, q) in &self.entries {
            if excluded(id) {
                continue;
            }
            match q.source {
                InstanceSource::Msm => msm.push(id.as_str()),
                InstanceSource::Orcas => orcas.push(id.as_str()),
                InstanceSource::Test => {}
            }
        }
        let want_msm = n.div_ceil(2);
        let want_orcas = n / 2;
        if msm.len() < want_msm || orcas.len() < want_orcas {
            return Err(Error::invalid(
                "dataset-builder",
                format!(
                    "{what}: need {want_msm} MSM and {want_orcas} ORCAS fill queries, pool has {} and {} (short by {} and {})",
                    msm.len(),
                    orcas.len(),
                    want_msm.saturating_sub(msm.len()),
                    want_orcas.saturating_sub(orcas.len())
                ),
            ));
        }
        let mut rng = seed::derived_rng(seed, &format!("fill/{what}"));
        let mut out = Vec::with_capacity(n);
        for (side, want) in [(&msm, want_msm), (&orcas, want_orcas)] {
            let mut picked = index::sample(&mut rng, side.len(), want).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| self.instance(side[i], seed, None)));
        }
        out.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        Ok(out)
    }
}

pub fn build_no_leakage(pool: &QueryPool, exclusions: &BTreeSet<String>, spec: &DatasetSpec) -> Result<TrainingSet> {
    spec.check()?;
    let instances = pool.fill(spec.query_count(), |q| exclusions.contains(q), spec.seed, &spec.file_name())?;
    Ok(TrainingSet { instances })
}

/// Distinct verified leaking queries with the topic each leaks into (the
/// most similar one, ties to the smaller topic id).
pub fn verified_leak_topics(verified_leaks: &[LeakageCandidate]) -> BTreeMap<String, String> {
    let mut best: BTreeMap<String, (f32, String)> = BTreeMap::new();
    for c in verified_leaks.iter().filter(|c| c.label == Some(true)) {
        let e = best.entry(c.query_id.clone()).or_insert((c.similarity, c.topic_id.clone()));
        if c.similarity > e.0 || (c.similarity == e.0 && c.topic_id < e.1) {
            *e = (c.similarity, c.topic_id.clone());
        }
    }
    best.into_iter().map(|(q, (_, t))| (q, t)).collect()
}

/// The leaked queries of an MS MARCO leakage family, chosen from the
/// verified leaks with a seed that ignores the dataset size.
fn select_msm_leaks(verified_leaks: &[LeakageCandidate], pool: &QueryPool, spec: &DatasetSpec) -> Result<Vec<(String, String)>> {
    let leaks = verified_leak_topics(verified_leaks);
    let usable: Vec<(&String, &String)> = leaks.iter().filter(|(q, _)| pool.contains(q)).collect();
    if usable.len() < leaks.len() {
        log::warn!(
            "dataset-builder: {} verified leaking queries are not usable training queries and are skipped",
            leaks.len() - usable.len()
        );
    }
    if usable.len() < spec.leaked_query_count {
        return Err(spec.fail(format!(
            "need {} verified leaking queries, only {} usable",
            spec.leaked_query_count,
            usable.len()
        )));
    }
    let mut rng = seed::derived_rng(spec.seed, &format!("leaks/{}", spec.scenario));
    let mut picked = index::sample(&mut rng, usable.len(), spec.leaked_query_count).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| (usable[i].0.clone(), usable[i].1.clone()))
        .collect())
}

pub fn build_msm_leakage(
    verified_leaks: &[LeakageCandidate],
    pool: &QueryPool,
    exclusions: &BTreeSet<String>,
    spec: &DatasetSpec,
) -> Result<TrainingSet> {
    spec.check()?;
    let leaks = select_msm_leaks(verified_leaks, pool, spec)?;
    let leaked_ids: BTreeSet<&str> = leaks.iter().map(|(q, _)| q.as_str()).collect();
    let mut instances: Vec<TrainingInstance> = leaks
        .iter()
        .map(|(q, t)| pool.instance(q, spec.seed, Some(t)))
        .collect();
    instances.extend(pool.fill(
        spec.query_count() - leaks.len(),
        |q| exclusions.contains(q) || leaked_ids.contains(q),
        spec.seed,
        &spec.file_name(),
    )?);
    Ok(TrainingSet { instances })
}

/// Judged documents of a topic split into relevant and non-relevant ids.
fn judged_split(qrels: &Qrels, topic: &str) -> (Vec<String>, Vec<String>) {
    let mut rel = Vec::new();
    let mut non = Vec::new();
    if let Some(j) = qrels.topic(topic) {
        for (d, &g) in j {
            if g >= 1 { &mut rel } else { &mut non }.push(d.clone());
        }
    }
    (rel, non)
}

fn two_of(items: &[String], seed: u64, label: &str) -> [String; 2] {
    let mut rng = seed::derived_rng(seed, label);
    let p = index::sample(&mut rng, items.len(), 2);
    [items[p.index(0)].clone(), items[p.index(1)].clone()]
}

/// Topics usable for test leakage: at least two relevant and two
/// non-relevant judged documents. Others are skipped with a warning.
pub fn usable_test_topics(topics: &TopicSet, qrels: &Qrels) -> Vec<String> {
    let mut out = Vec::new();
    for t in topics.topics() {
        let (rel, non) = judged_split(qrels, &t.topic_id);
        if rel.len() >= 2 && non.len() >= 2 {
            out.push(t.topic_id.clone());
        } else {
            log::warn!(
                "dataset-builder: topic {} has {} relevant and {} non-relevant judged documents; skipped for test leakage",
                t.topic_id,
                rel.len(),
                non.len()
            );
        }
    }
    out.sort();
    out
}

pub fn build_test_leakage(
    topics: &TopicSet,
    qrels: &Qrels,
    pool: &QueryPool,
    exclusions: &BTreeSet<String>,
    spec: &DatasetSpec,
) -> Result<TrainingSet> {
    spec.check()?;
    let usable = usable_test_topics(topics, qrels);
    let need = spec.leaked_query_count / 2;
    if usable.len() < need {
        return Err(spec.fail(format!("need {need} usable test topics, only {} qualify", usable.len())));
    }
    let mut rng = seed::derived_rng(spec.seed, &format!("leaks/{}", spec.scenario));
    let mut picked = index::sample(&mut rng, usable.len(), need).into_vec();
    picked.sort_unstable();

    let mut instances = Vec::with_capacity(spec.query_count());
    for i in picked {
        let topic_id = &usable[i];
        let title = &topics.get(topic_id).expect("usable topic exists").title;
        let (rel, non) = judged_split(qrels, topic_id);
        let pos = two_of(&rel, spec.seed, &format!("test-positive/{topic_id}"));
        let neg = two_of(&non, spec.seed, &format!("test-negative/{topic_id}"));
        for (p, n) in pos.into_iter().zip(neg) {
            instances.push(TrainingInstance {
                query_id: format!("{TEST_QUERY_PREFIX}{topic_id}"),
                query_text: title.clone(),
                pos_doc_id: p,
                neg_doc_id: n,
                source: InstanceSource::Test,
                leaked: true,
                leak_topic_id: Some(topic_id.clone()),
            });
        }
    }
    let fill = spec.query_count() - instances.len();
    instances.extend(pool.fill(fill, |q| exclusions.contains(q), spec.seed, &spec.file_name())?);
    Ok(TrainingSet { instances })
}

/// Everything one benchmark contributes to the grid.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioInputs<'a> {
    pub scenario: Scenario,
    pub topics: &'a TopicSet,
    pub qrels: &'a Qrels,
    /// Verified leaks; only rows labeled true are used.
    pub verified_leaks: &'a [LeakageCandidate],
    /// Every leakage candidate of the scenario, labeled or not.
    pub exclusions: &'a BTreeSet<String>,
}

pub fn build(inputs: &ScenarioInputs<'_>, pool: &QueryPool, spec: &DatasetSpec) -> Result<TrainingSet> {
    match spec.kind {
        Kind::NoLeakage => build_no_leakage(pool, inputs.exclusions, spec),
        Kind::MsmLeakage => build_msm_leakage(inputs.verified_leaks, pool, inputs.exclusions, spec),
        Kind::TestLeakage => build_test_leakage(inputs.topics, inputs.qrels, pool, inputs.exclusions, spec),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridEntry {
    pub file: String,
    pub spec: DatasetSpec,
    pub records: usize,
    pub instances: usize,
    pub leaked_instances: usize,
    pub fill_msm: usize,
    pub fill_orcas: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridManifest {
    pub seed: u64,
    pub rng: String,
    pub entries: Vec<GridEntry>,
}

/// Per-dataset counts as recorded in the manifest.
pub fn summarize(spec: &DatasetSpec, set: &TrainingSet, bytes: &[u8]) -> GridEntry {
    let fill = |s| set.instances.iter().filter(|i| !i.leaked && i.source == s).count();
    GridEntry {
        file: spec.file_name(),
        spec: *spec,
        records: set.instances.len(),
        instances: set.pair_count(),
        leaked_instances: 2 * set.leaked_records().count(),
        fill_msm: fill(InstanceSource::Msm),
        fill_orcas: fill(InstanceSource::Orcas),
        sha256: sha256_hex(bytes),
    }
}

/// Builds and writes every (scenario, kind, size) dataset into `out_dir`.
/// Datasets are built in parallel; the first failure aborts the grid and
/// names its dataset.
pub fn build_grid(
    scenarios: &[ScenarioInputs<'_>],
    pool: &QueryPool,
    sizes: &[usize],
    seed: u64,
    out_dir: &Path,
) -> Result<GridManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut jobs = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        for kind in Kind::ALL {
            for &size in sizes {
                jobs.push((si, DatasetSpec::custom(s.scenario, kind, size, seed)));
            }
        }
    }
    let results = par::map(&jobs, |(si, spec)| -> Result<GridEntry> {
        let set = build(&scenarios[*si], pool, spec).map_err(|e| match e {
            Error::Invalid { msg, .. } if msg.starts_with(&spec.file_name()) => Error::invalid("dataset-builder", msg),
            other => Error::invalid("dataset-builder", format!("{}: {other}", spec.file_name())),
        })?;
        let bytes = set.to_jsonl();
        let path = out_dir.join(spec.file_name());
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        Ok(summarize(spec, &set, &bytes))
    });
    let entries = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(GridManifest {
        seed,
        rng: seed::RNG_ALGORITHM.to_string(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{Query, Source, Topic, TopicField};

    struct Fixture {
        queries: QueryCollection,
        positives: Qrels,
        runs: Run,
    }

    fn fixture(n: usize) -> Fixture {
        let mut qs = Vec::new();
        let mut positives = Qrels::new();
        let mut runs = Vec::new();
        for i in 0..n {
            let id = format!("q{i:05}");
            qs.push(Query {
                id: id.clone(),
                text: format!("query {i}"),
                source: if i % 2 == 0 { Source::Msm } else { Source::Orcas },
            });
            positives.insert(&id, &format!("d{i}"), 1).unwrap();
            if i % 7 == 0 {
                positives.insert(&id, &format!("d{}", i + 1), 1).unwrap();
            }
            let entries = (0..20)
                .map(|r| RunEntry::new(format!("d{}", i + r), r as u32 + 1, 100.0 - r as f64, "bm25"))
                .collect();
            runs.push((id, entries));
        }
        Fixture {
            queries: QueryCollection::new(qs).unwrap(),
            positives,
            runs: Run::from_topics(runs).unwrap(),
        }
    }

    fn run_of(n: usize) -> Vec<RunEntry> {
        (0..n).map(|r| RunEntry::new(format!("d{r:03}"), r as u32 + 1, -(r as f64), "t")).collect()
    }

    #[test]
    fn negative_sampling() {
        let run = run_of(100);
        let pos: BTreeSet<String> = ["d007".to_string()].into();
        let a = sample_negative("q", &run, &pos, 5).unwrap();
        assert_ne!(a, "d007");
        assert_eq!(a, sample_negative("q", &run, &pos, 5).unwrap());
        let drawn: BTreeSet<String> = (0..400).map(|s| sample_negative("q", &run, &pos, s).unwrap()).collect();
        assert!(drawn.len() > 80 && !drawn.contains("d007"));

        let all: BTreeSet<String> = run.iter().map(|e| e.doc_id.clone()).collect();
        assert!(sample_negative("q", &run, &all, 5).is_err());

        // beyond rank 100 is never used
        let long = run_of(150);
        assert!((0..300).all(|s| sample_negative("q", &long, &pos, s).unwrap().as_str() < "d100"));
    }

    #[test]
    fn no_leakage_balance_and_purity() {
        let f = fixture(1200);
        let pool = QueryPool::new(&f.queries, &f.positives, &f.runs);
        let exclusions: BTreeSet<String> = (0..100).map(|i| format!("q{i:05}")).collect();
        let spec = DatasetSpec::new(Scenario::Cc17, Kind::NoLeakage, 1000, 9).unwrap();
        let set = build_no_leakage(&pool, &exclusions, &spec).unwrap();
        assert_eq!(set.instances.len(), 500);
        assert_eq!(set.pair_count(), 1000);
        let msm = set.instances.iter().filter(|i| i.source == InstanceSource::Msm).count();
        assert_eq!((msm, 500 - msm), (250, 250));
        assert!(set.instances.iter().all(|i| !exclusions.contains(&i.query_id)));
        assert!(set.instances.iter().all(|i| i.validate().is_ok()));
        let ids: BTreeSet<&str> = set.instances.iter().map(|i| i.query_id.as_str()).collect();
        assert_eq!(ids.len(), 500);
        assert_eq!(set.to_jsonl(), build_no_leakage(&pool, &exclusions, &spec).unwrap().to_jsonl());
    }

    #[test]
    fn odd_query_count_balance() {
        let f = fixture(100);
        let pool = QueryPool::new(&f.queries, &f.positives, &f.runs);
        let spec = DatasetSpec::custom(Scenario::Cc17, Kind::NoLeakage, 14, 1);
        let set = build_no_leakage(&pool, &BTreeSet::new(), &spec).unwrap();
        let msm = set.instances.iter().filter(|i| i.source == InstanceSource::Msm).count();
        assert_eq!((msm, set.instances.len() - msm), (4, 3));
    }

    #[test]
    fn excluding_one_side_fails() {
        let f = fixture(200);
        let pool = QueryPool::new(&f.queries, &f.positives, &f.runs);
        let orcas: BTreeSet<String> = f
            .queries
            .entries()
            .iter()
            .filter(|q| q.source == Source::Orcas)
            .map(|q| q.id.clone())
            .collect();
        let spec = DatasetSpec::custom(Scenario::Cc17, Kind::NoLeakage, 20, 1);
        let err = build_no_leakage(&pool, &orcas, &spec).unwrap_err().to_string();
        assert!(err.contains("short by 0 and 5"), "{err}");
    }

    fn leaks(n: usize) -> Vec<LeakageCandidate> {
        (0..n)
            .flat_map(|i| {
                let q = format!("q{:05}", i * 3);
                [
                    LeakageCandidate {
                        topic_id: format!("t{}", i % 10),
                        query_id: q.clone(),
                        field: TopicField::Title,
                        similarity: 0.95,
                        label: Some(true),
                        reformulation: None,
                    },
                    LeakageCandidate {
                        topic_id: "t99".into(),
                        query_id: q,
                        field: TopicField::Variant(0),
                        similarity: 0.92,
                        label: Some(true),
                        reformulation: None,
                    },
                ]
            })
            .collect()
    }

    #[test]
    fn msm_leakage_constant_across_sizes() {
        let f = fixture(6000);
        let pool = QueryPool::new(&f.queries, &f.positives, &f.runs);
        let verified = leaks(150);
        let exclusions: BTreeSet<String> = verified.iter().map(|c| c.query_id.clone()).collect();
        let mut leaked_sets = Vec::new();
        for size in [1000, 2000, 4000] {
            let spec = DatasetSpec::new(Scenario::Cc17, Kind::MsmLeakage, size, 3).unwrap();
            let set = build_msm_leakage(&verified, &pool, &exclusions, &spec).unwrap();
            assert_eq!(set.instances.len(), size / 2);
            let leaked: Vec<_> = set.leaked_records().cloned().collect();
            assert_eq!(leaked.len(), 100);
            assert!(leaked.iter().all(|i| i.leak_topic_id.as_deref().is_some_and(|t| t != "t99")));
            let fill: Vec<_> = set.instances.iter().filter(|i| !i.leaked).collect();
            assert!(fill.iter().all(|i| !exclusions.contains(&i.query_id)));
            let msm = fill.iter().filter(|i| i.source == InstanceSource::Msm).count();
            assert!(msm.abs_diff(fill.len() - msm) <= 1);
            leaked_sets.push(leaked);
        }
        assert!(leaked_sets.windows(2).all(|w| w[0] == w[1]));

        let spec = DatasetSpec::new(Scenario::Robust04, Kind::MsmLeakage, 2000, 3).unwrap();
        assert!(build_msm_leakage(&verified, &pool, &exclusions, &spec).is_err());
    }

    fn test_topics(n: usize, thin: usize) -> (TopicSet, Qrels) {
        let mut topics = Vec::new();
        let mut qrels = Qrels::new();
        for t in 0..n {
            let id = format!("{}", 300 + t);
            topics.push(Topic {
                topic_id: id.clone(),
                title: format!("title {t}"),
                description: String::new(),
                narrative: String::new(),
                variants: vec![],
            });
            let rel = if t < thin { 1 } else { 3 };
            for d in 0..rel {
                qrels.insert(&id, &format!("R{t}-{d}"), 1 + (d as u32 % 2)).unwrap();
            }
            for d in 0..4 {
                qrels.insert(&id, &format!("N{t}-{d}"), 0).unwrap();
            }
        }
        (TopicSet::new(topics).unwrap(), qrels)
    }

    #[test]
    fn test_leakage_two_records_per_topic() {
        let f = fixture(2000);
        let pool = QueryPool::new(&f.queries, &f.positives, &f.runs);
        let (topics, qrels) = test_topics(60, 5);
        let spec = DatasetSpec::new(Scenario::Cc18, Kind::TestLeakage, 1000, 4).unwrap();
        let set = build_test_leakage(&topics, &qrels, &pool, &BTreeSet::new(), &spec).unwrap();
        assert_eq!(set.instances.len(), 500);
        let leaked: Vec<_> = set.leaked_records().collect();
        assert_eq!(leaked.len(), 100);
        let mut per_topic: BTreeMap<&str, Vec<&TrainingInstance>> = BTreeMap::new();
        for i in &leaked {
            per_topic.entry(i.leak_topic_id.as_deref().unwrap()).or_default().push(i);
        }
        assert_eq!(per_topic.len(), 50);
        for (t, recs) in per_topic {
            assert_eq!(recs.len(), 2);
            assert_ne!(recs[0].pos_doc_id, recs[1].pos_doc_id);
            assert_ne!(recs[0].neg_doc_id, recs[1].neg_doc_id);
            for r in recs {
                assert!(qrels.grade(t, &r.pos_doc_id).unwrap() >= 1);
                assert_eq!(qrels.grade(t, &r.neg_doc_id), Some(0));
                assert_eq!(r.query_text, topics.get(t).unwrap().title);
                assert_eq!(r.source, InstanceSource::Test);
            }
        }
        // the thin topics were skipped
        assert!(leaked.iter().all(|i| i.leak_topic_id.as_deref().unwrap() >= "305"));

        let (few, few_qrels) = test_topics(52, 5);
        assert!(build_test_leakage(&few, &few_qrels, &pool, &BTreeSet::new(), &spec).is_err());
    }

    #[test]
    fn grid_files_and_determinism() {
        let f = fixture(3000);
        let pool = QueryPool::new(&f.queries, &f.positives, &f.runs);
        let (topics, qrels) = test_topics(60, 0);
        let verified = leaks(120);
        let exclusions: BTreeSet<String> = verified.iter().map(|c| c.query_id.clone()).collect();
        let inputs = [ScenarioInputs {
            scenario: Scenario::Cc17,
            topics: &topics,
            qrels: &qrels,
            verified_leaks: &verified,
            exclusions: &exclusions,
        }];
        let dir = tempfile::tempdir().unwrap();
        let a = build_grid(&inputs, &pool, &[1000, 2000], 11, dir.path()).unwrap();
        assert_eq!(a.entries.len(), 6);
        for e in &a.entries {
            assert!(dir.path().join(&e.file).exists());
            let expected = if e.spec.kind == Kind::NoLeakage { 0 } else { 200 };
            assert_eq!(e.leaked_instances, expected);
            assert_eq!(e.instances, e.spec.size_instances);
        }
        let b = build_grid(&inputs, &pool, &[1000, 2000], 11, dir.path()).unwrap();
        assert_eq!(a, b);
        let c = build_grid(&inputs, &pool, &[1000, 2000], 12, dir.path()).unwrap();
        assert_ne!(a.entries[0].sha256, c.entries[0].sha256);
    }

    #[test]
    fn spec_validation() {
        assert!(DatasetSpec::new(Scenario::Robust04, Kind::NoLeakage, 1500, 0).is_err());
        let s = DatasetSpec::new(Scenario::Robust04, Kind::MsmLeakage, 16000, 0).unwrap();
        assert_eq!((s.leaked_query_count, s.query_count()), (500, 8000));
        assert_eq!(DatasetSpec::new(Scenario::Cc18, Kind::NoLeakage, 1000, 0).unwrap().leaked_query_count, 0);
        assert_eq!(s.file_name(), "robust04_msm-leakage_16000.jsonl");
        assert_eq!("CC17".parse::<Scenario>().unwrap(), Scenario::Cc17);
    }
}
