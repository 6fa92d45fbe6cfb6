//! Finding training queries that leak into test topics.
//!
//! Each topic field instance (title, description, every query variant) is
//! embedded as its own row with id `topic_id#field#index`. Its nearest
//! training queries become [`LeakageCandidate`]s. A labeled sample fixes the
//! similarity threshold, and a token-set heuristic assigns reformulation
//! types. A (topic, query) pair leaks when any of its field similarities
//! reaches the threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index;
use serde::Serialize;

use crate::corpus_io::{QueryCollection, Source, TopicSet};
use crate::embed_index::CosineIndex;
use crate::error::{Error, Result};
use crate::seed;

pub use crate::corpus_io::{LeakageCandidate, Reformulation, TopicField};

/// Leakage threshold used when no calibration is run.
pub const DEFAULT_THRESHOLD: f32 = 0.91;
pub const DEFAULT_TARGET_PRECISION: f64 = 0.9;
pub const DEFAULT_NEIGHBORS: usize = 100;
/// Candidates per topic passed on to manual review.
pub const DEFAULT_REVIEW_DEPTH: usize = 5;

/// Row id for one topic field instance.
pub fn topic_row_id(topic_id: &str, field: TopicField) -> String {
    match field {
        TopicField::Variant(i) => format!("{topic_id}#variant#{i}"),
        f => format!("{topic_id}#{}#0", f.kind()),
    }
}

/// Inverse of [`topic_row_id`]. Topic ids may themselves contain `#`.
pub fn parse_topic_row_id(id: &str) -> Option<(&str, TopicField)> {
    let mut parts = id.rsplitn(3, '#');
    let index: u32 = parts.next()?.parse().ok()?;
    let field = match parts.next()? {
        "title" if index == 0 => TopicField::Title,
        "description" if index == 0 => TopicField::Description,
        "variant" => TopicField::Variant(index),
        _ => return None,
    };
    let topic = parts.next().filter(|t| !t.is_empty())?;
    Some((topic, field))
}

/// The k nearest training queries for every topic field instance. Topic
/// rows are normalized here; `queries` must index unit rows.
///
/// Output is sorted by (topic id, similarity desc, query id, field); a pair
/// matched through several fields appears once per field.
pub fn generate_candidates(
    topics: &TopicSet,
    queries: &CosineIndex<'_>,
    topic_embeddings: &crate::corpus_io::EmbeddingMatrix,
    k: usize,
) -> Result<Vec<LeakageCandidate>> {
    let mut keys = Vec::with_capacity(topic_embeddings.count());
    for id in topic_embeddings.ids() {
        let (topic_id, field) = parse_topic_row_id(id).ok_or_else(|| {
            Error::invalid("leakage-id", format!("topic embedding id {id:?} is not topic#field#index"))
        })?;
        let topic = topics.get(topic_id).ok_or_else(|| {
            Error::invalid("leakage-id", format!("embedding row {id:?} names unknown topic {topic_id:?}"))
        })?;
        if let TopicField::Variant(i) = field {
            if i as usize >= topic.variants.len() {
                return Err(Error::invalid(
                    "leakage-id",
                    format!("embedding row {id:?}: topic {topic_id} has {} variants", topic.variants.len()),
                ));
            }
        }
        keys.push((topic_id.to_string(), field));
    }

    let unit = crate::embed_index::normalize_rows(topic_embeddings)?;
    let probes: Vec<&[f32]> = (0..unit.count()).map(|i| unit.row(i)).collect();
    let hits = queries.top_k_batch(&probes, k)?;

    let mut out: Vec<LeakageCandidate> = keys
        .into_iter()
        .zip(hits)
        .flat_map(|((topic_id, field), neighbors)| {
            neighbors.into_iter().map(move |n| LeakageCandidate {
                topic_id: topic_id.clone(),
                query_id: n.id,
                field,
                similarity: n.similarity.clamp(-1.0, 1.0),
                label: None,
                reformulation: None,
            })
        })
        .collect();
    sort_candidates(&mut out);
    Ok(out)
}

fn sort_candidates(c: &mut [LeakageCandidate]) {
    c.sort_by(|a, b| {
        a.topic_id
            .cmp(&b.topic_id)
            .then(b.similarity.total_cmp(&a.similarity))
            .then_with(|| a.query_id.cmp(&b.query_id))
            .then(a.field.cmp(&b.field))
    });
}

/// One row per (topic, query): the most similar field wins (ties to the
/// earlier field), labels are OR-ed, and a reformulation type is kept from
/// the best row that has one.
pub fn dedupe_pairs(candidates: &[LeakageCandidate]) -> Vec<LeakageCandidate> {
    let mut best: BTreeMap<(&str, &str), LeakageCandidate> = BTreeMap::new();
    for c in candidates {
        let key = (c.topic_id.as_str(), c.query_id.as_str());
        match best.get_mut(&key) {
            None => {
                best.insert(key, c.clone());
            }
            Some(cur) => {
                let label = match (cur.label, c.label) {
                    (None, x) | (x, None) => x,
                    (Some(a), Some(b)) => Some(a || b),
                };
                let better = c.similarity > cur.similarity
                    || (c.similarity == cur.similarity && c.field < cur.field);
                let reformulation = if better {
                    c.reformulation.or(cur.reformulation)
                } else {
                    cur.reformulation.or(c.reformulation)
                };
                if better {
                    *cur = c.clone();
                }
                cur.label = label;
                cur.reformulation = reformulation;
            }
        }
    }
    let mut out: Vec<_> = best.into_values().collect();
    sort_candidates(&mut out);
    out
}

/// The `depth` most similar distinct queries per topic at or above `theta`.
pub fn review_candidates(candidates: &[LeakageCandidate], theta: f32, depth: usize) -> Vec<LeakageCandidate> {
    let mut per_topic: BTreeMap<String, usize> = BTreeMap::new();
    dedupe_pairs(candidates)
        .into_iter()
        .filter(|c| c.similarity >= theta)
        .filter(|c| {
            let n = per_topic.entry(c.topic_id.clone()).or_default();
            *n += 1;
            *n <= depth
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub floor: f32,
    pub n: usize,
    pub bin_width: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            floor: 0.8,
            n: 100,
            bin_width: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinAllocation {
    pub lower: f64,
    pub upper: f64,
    pub population: usize,
    pub sampled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelingSheet {
    pub rows: Vec<LeakageCandidate>,
    /// Set when fewer than `n` distinct pairs lie above the floor.
    pub insufficient: bool,
    pub bins: Vec<BinAllocation>,
}

/// Stratified sample of distinct (topic, query) pairs with similarity
/// strictly above `floor`, over equal-width bins spanning `[floor, 1]`.
///
/// Each bin gets `floor(n * population / total)` draws; the remaining draws
/// go one at a time to the most populated bins that still have room.
pub fn stratified_sample(candidates: &[LeakageCandidate], config: &SampleConfig, seed: u64) -> Result<LabelingSheet> {
    if !(config.bin_width > 0.0 && config.floor < 1.0) {
        return Err(Error::invalid("leakage-id", "sampling needs bin_width > 0 and floor < 1"));
    }
    let floor = f64::from(config.floor);
    let n_bins = (((1.0 - floor) / config.bin_width) - 1e-9).ceil().max(1.0) as usize;
    let mut bins: Vec<Vec<LeakageCandidate>> = vec![Vec::new(); n_bins];
    for mut c in dedupe_pairs(candidates) {
        if c.similarity <= config.floor {
            continue;
        }
        let b = ((f64::from(c.similarity) - floor) / config.bin_width).floor() as usize;
        c.label = None;
        c.reformulation = None;
        bins[b.min(n_bins - 1)].push(c);
    }
    let total: usize = bins.iter().map(Vec::len).sum();
    let alloc = allocate(&bins.iter().map(Vec::len).collect::<Vec<_>>(), config.n.min(total));

    let mut rows = Vec::new();
    let mut report = Vec::with_capacity(n_bins);
    for (b, (mut pairs, quota)) in bins.into_iter().zip(&alloc).enumerate() {
        report.push(BinAllocation {
            lower: floor + b as f64 * config.bin_width,
            upper: (floor + (b + 1) as f64 * config.bin_width).min(1.0),
            population: pairs.len(),
            sampled: *quota,
        });
        pairs.sort_by(|a, b| (&a.topic_id, &a.query_id).cmp(&(&b.topic_id, &b.query_id)));
        let mut rng = seed::derived_rng(seed, &format!("stratified-sample/bin{b}"));
        let mut picked: Vec<usize> = index::sample(&mut rng, pairs.len(), *quota).into_vec();
        picked.sort_unstable();
        rows.extend(picked.into_iter().map(|i| pairs[i].clone()));
    }
    rows.sort_by(|a, b| (&a.topic_id, &a.query_id).cmp(&(&b.topic_id, &b.query_id)));
    let insufficient = total < config.n;
    if insufficient {
        log::warn!("leakage-id: only {total} distinct pairs above {}, wanted {}", config.floor, config.n);
    }
    Ok(LabelingSheet {
        rows,
        insufficient,
        bins: report,
    })
}

fn allocate(populations: &[usize], n: usize) -> Vec<usize> {
    let total: usize = populations.iter().sum();
    if total == 0 {
        return vec![0; populations.len()];
    }
    let mut quota: Vec<usize> = populations.iter().map(|&p| n * p / total).collect();
    let mut order: Vec<usize> = (0..populations.len()).collect();
    order.sort_by(|&a, &b| populations[b].cmp(&populations[a]).then(a.cmp(&b)));
    let mut left = n - quota.iter().sum::<usize>();
    while left > 0 {
        for &b in &order {
            if left == 0 {
                break;
            }
            if quota[b] < populations[b] {
                quota[b] += 1;
                left -= 1;
            }
        }
    }
    quota
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub threshold: f32,
    pub target_precision: f64,
    pub achieved_precision: f64,
    /// Labeled pairs at or above the threshold.
    pub support: usize,
}

/// Lowest observed similarity `s` such that the pairs with similarity ≥ `s`
/// reach `target_precision`.
pub fn calibrate_threshold(labeled: &[(f32, bool)], target_precision: f64) -> Result<CalibrationResult> {
    if !labeled.iter().any(|&(_, l)| l) {
        return Err(Error::invalid("leakage-id", "calibration needs at least one true-labeled pair"));
    }
    let mut sorted = labeled.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best: Option<CalibrationResult> = None;
    let mut best_precision = 0.0f64;
    let (mut pos, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let cutoff = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == cutoff {
            pos += usize::from(sorted[i].1);
            seen += 1;
            i += 1;
        }
        let precision = pos as f64 / seen as f64;
        best_precision = best_precision.max(precision);
        if precision >= target_precision {
            best = Some(CalibrationResult {
                threshold: cutoff,
                target_precision,
                achieved_precision: precision,
                support: seen,
            });
        }
    }
    best.ok_or(Error::PrecisionUnreachable {
        target: target_precision,
        best: best_precision,
    })
}

/// Calibrate from the labeled rows of a sheet (unlabeled rows are ignored).
pub fn calibrate_from_sheet(rows: &[LeakageCandidate], target_precision: f64) -> Result<CalibrationResult> {
    let labeled: Vec<(f32, bool)> = rows
        .iter()
        .filter_map(|r| r.label.map(|l| (r.similarity, l)))
        .collect();
    calibrate_threshold(&labeled, target_precision)
}

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "do", "does", "for",
    "from", "had", "has", "have", "how", "i", "if", "in", "into", "is", "it", "its", "me", "my", "of", "on",
    "or", "our", "should", "so", "than", "that", "the", "their", "them", "there", "these", "they", "this",
    "those", "to", "was", "we", "were", "what", "when", "where", "which", "who", "whom", "why", "will",
    "with", "you", "your",
];

/// Folds common inflections: plural `-s`/`-es`/`-ies`, `-ing`, `-ed`.
fn stem(word: &str) -> String {
    let has_vowel = |s: &str| s.chars().any(|c| "aeiouy".contains(c));
    let w = word;
    if let Some(base) = w.strip_suffix("ies").filter(|b| b.len() >= 2) {
        return format!("{base}y");
    }
    if let Some(base) = w.strip_suffix("sses") {
        return format!("{base}ss");
    }
    for suf in ["ches", "shes", "xes", "zes"] {
        if let Some(base) = w.strip_suffix(suf) {
            return format!("{base}{}", &suf[..suf.len() - 2]);
        }
    }
    if let Some(base) = w.strip_suffix("ing").filter(|b| b.len() >= 3 && has_vowel(b)) {
        return base.to_string();
    }
    if let Some(base) = w.strip_suffix("ed").filter(|b| b.len() >= 3 && has_vowel(b)) {
        return base.to_string();
    }
    if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return w[..w.len() - 1].to_string();
    }
    w.to_string()
}

/// Lowercased, punctuation-free, stopword-free, stemmed token set.
pub fn normalize_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .map(|t| stem(&t))
        .collect()
}

/// Heuristic reformulation type of `query` relative to `title`.
pub fn classify_reformulation(title: &str, query: &str, similarity: f32, different_topic_floor: f32) -> Reformulation {
    let t = normalize_tokens(title);
    let q = normalize_tokens(query);
    if t == q {
        Reformulation::Identical
    } else if q.is_subset(&t) {
        Reformulation::Generalization
    } else if q.is_superset(&t) {
        Reformulation::Specialization
    } else if similarity >= different_topic_floor {
        Reformulation::Reformulation
    } else {
        Reformulation::DifferentTopic
    }
}

/// Attach a reformulation type to every candidate. A human label, when
/// present, overrides the heuristic's leak decision; otherwise the label is
/// derived from the type.
pub fn classify_candidates(
    candidates: &[LeakageCandidate],
    topics: &TopicSet,
    queries: &QueryCollection,
    different_topic_floor: f32,
) -> Result<Vec<LeakageCandidate>> {
    candidates
        .iter()
        .map(|c| {
            let topic = topics
                .get(&c.topic_id)
                .ok_or_else(|| Error::invalid("leakage-id", format!("unknown topic {:?}", c.topic_id)))?;
            let query = queries
                .get(&c.query_id)
                .ok_or_else(|| Error::invalid("leakage-id", format!("unknown query {:?}", c.query_id)))?;
            let heuristic = classify_reformulation(&topic.title, &query.text, c.similarity, different_topic_floor);
            let reformulation = match c.label {
                Some(false) => Reformulation::DifferentTopic,
                Some(true) if heuristic == Reformulation::DifferentTopic => Reformulation::Reformulation,
                _ => heuristic,
            };
            Ok(LeakageCandidate {
                label: Some(reformulation.is_leak()),
                reformulation: Some(reformulation),
                ..c.clone()
            })
        })
        .collect()
}

/// Cohen's kappa for two raters over the same items.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(
            "leakage-id",
            format!("kappa needs equal-length label lists, got {} and {}", a.len(), b.len()),
        ));
    }
    if a.is_empty() {
        return Err(Error::invalid("leakage-id", "kappa needs at least one item"));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let mut ca: BTreeMap<&T, f64> = BTreeMap::new();
    let mut cb: BTreeMap<&T, f64> = BTreeMap::new();
    for x in a {
        *ca.entry(x).or_default() += 1.0;
    }
    for y in b {
        *cb.entry(y).or_default() += 1.0;
    }
    let p_o = agree / n;
    let p_e: f64 = ca.iter().map(|(k, v)| v / n * cb.get(k).copied().unwrap_or(0.0) / n).sum();
    if p_e == 1.0 {
        return Ok(if p_o == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TopicQueryCount {
    pub topics: usize,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub field: String,
    pub cells: Vec<TopicQueryCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifiedCounts {
    pub true_pairs: TopicQueryCount,
    pub false_pairs: TopicQueryCount,
    pub reformulations: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    pub theta: f32,
    pub verified_only: bool,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub verified: Option<VerifiedCounts>,
}

fn count_pairs<'a>(pairs: impl Iterator<Item = &'a LeakageCandidate>) -> TopicQueryCount {
    let mut topics = BTreeSet::new();
    let mut queries = BTreeSet::new();
    for c in pairs {
        topics.insert(c.topic_id.as_str());
        queries.insert(c.query_id.as_str());
    }
    TopicQueryCount {
        topics: topics.len(),
        queries: queries.len(),
    }
}

pub type FieldGroup = (&'static str, fn(&TopicField) -> bool);

/// Report rows: named predicates over the matched field.
pub const FIELD_GROUPS: [FieldGroup; 4] = [
    ("title", |f| *f == TopicField::Title),
    ("description", |f| *f == TopicField::Description),
    ("variants", |f| matches!(f, TopicField::Variant(_))),
    ("union", |_| true),
];

/// Topic/query counts per field group and source column for candidates at or
/// above `theta`, plus a deduplicated union row.
///
/// With `verified_only`, only candidates labeled true count as leaks. Any
/// labels present also yield true/false pair counts and a reformulation
/// histogram over the labeled pairs at or above `theta`.
pub fn leakage_report(
    candidates: &[LeakageCandidate],
    theta: f32,
    verified_only: bool,
    queries: Option<&QueryCollection>,
) -> LeakageReport {
    let above: Vec<&LeakageCandidate> = candidates
        .iter()
        .filter(|c| c.similarity >= theta)
        .filter(|c| !verified_only || c.label == Some(true))
        .collect();
    let source_of = |c: &LeakageCandidate| queries.and_then(|q| q.get(&c.query_id)).map(|q| q.source);

    let mut sources: Vec<Source> = above.iter().filter_map(|c| source_of(c)).collect();
    sources.sort();
    sources.dedup();
    let mut columns: Vec<String> = sources.iter().map(Source::to_string).collect();
    columns.push("ALL".into());

    let rows = FIELD_GROUPS
        .iter()
        .map(|(name, in_group)| {
            let in_row: Vec<&LeakageCandidate> = above.iter().copied().filter(|c| in_group(&c.field)).collect();
            let mut cells: Vec<TopicQueryCount> = sources
                .iter()
                .map(|s| count_pairs(in_row.iter().copied().filter(|c| source_of(c) == Some(*s))))
                .collect();
            cells.push(count_pairs(in_row.iter().copied()));
            ReportRow {
                field: name.to_string(),
                cells,
            }
        })
        .collect();

    let labeled: Vec<LeakageCandidate> = dedupe_pairs(
        &candidates
            .iter()
            .filter(|c| c.similarity >= theta && c.label.is_some())
            .cloned()
            .collect::<Vec<_>>(),
    );
    let verified = (!labeled.is_empty()).then(|| {
        let mut reformulations: BTreeMap<String, usize> = BTreeMap::new();
        for c in &labeled {
            if let Some(r) = c.reformulation {
                *reformulations.entry(r.as_str().to_string()).or_default() += 1;
            }
        }
        VerifiedCounts {
            true_pairs: pair_count(labeled.iter().filter(|c| c.label == Some(true))),
            false_pairs: pair_count(labeled.iter().filter(|c| c.label == Some(false))),
            reformulations,
        }
    });

    LeakageReport {
        theta,
        verified_only,
        columns,
        rows,
        verified,
    }
}

/// Like [`count_pairs`] but `queries` counts (topic, query) pairs, the unit
/// of manual annotation.
fn pair_count<'a>(pairs: impl Iterator<Item = &'a LeakageCandidate>) -> TopicQueryCount {
    let mut topics = BTreeSet::new();
    let mut n = 0;
    for c in pairs {
        topics.insert(c.topic_id.as_str());
        n += 1;
    }
    TopicQueryCount {
        topics: topics.len(),
        queries: n,
    }
}

impl LeakageReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "leaking candidates (similarity >= {}{})",
            self.theta,
            if self.verified_only { ", verified only" } else { "" }
        );
        let _ = write!(out, "{:<12}", "field");
        for c in &self.columns {
            let _ = write!(out, " {:>8} {:>8}", format!("{c} T"), format!("{c} Q"));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<12}", row.field);
            for cell in &row.cells {
                let _ = write!(out, " {:>8} {:>8}", cell.topics, cell.queries);
            }
            out.push('\n');
        }
        if let Some(v) = &self.verified {
            let _ = writeln!(out, "\n{:<12} {:>8} {:>8}", "candidates", "queries", "topics");
            let _ = writeln!(out, "{:<12} {:>8} {:>8}", "true", v.true_pairs.queries, v.true_pairs.topics);
            let _ = writeln!(out, "{:<12} {:>8} {:>8}", "false", v.false_pairs.queries, v.false_pairs.topics);
            if !v.reformulations.is_empty() {
                let _ = writeln!(out, "\n{:<16} {:>8}", "type", "queries");
                for r in Reformulation::ALL {
                    let n = v.reformulations.get(r.as_str()).copied().unwrap_or(0);
                    let _ = writeln!(out, "{:<16} {:>8}", r.as_str(), n);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{EmbeddingMatrix, Query, Topic};
    use crate::embed_index::normalize_rows;
    use proptest::prelude::*;

    fn cand(topic: &str, query: &str, field: TopicField, sim: f32) -> LeakageCandidate {
        LeakageCandidate {
            topic_id: topic.into(),
            query_id: query.into(),
            field,
            similarity: sim,
            label: None,
            reformulation: None,
        }
    }

    fn topic(id: &str, title: &str, variants: usize) -> Topic {
        Topic {
            topic_id: id.into(),
            title: title.into(),
            description: String::new(),
            narrative: String::new(),
            variants: (0..variants).map(|i| format!("v{i}")).collect(),
        }
    }

    #[test]
    fn row_ids_round_trip() {
        for f in [TopicField::Title, TopicField::Description, TopicField::Variant(7)] {
            let id = topic_row_id("a#b", f);
            assert_eq!(parse_topic_row_id(&id), Some(("a#b", f)));
        }
        assert_eq!(parse_topic_row_id("441#title#1"), None);
        assert_eq!(parse_topic_row_id("441#narrative#0"), None);
        assert_eq!(parse_topic_row_id("#title#0"), None);
        assert_eq!(parse_topic_row_id("title#0"), None);
    }

    fn queries_matrix() -> EmbeddingMatrix {
        let ids: Vec<String> = (0..5).map(|i| format!("q{i}")).collect();
        let data = vec![
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, //
            0.6, 0.8, 0.0, //
            0.0, 0.6, 0.8,
        ];
        EmbeddingMatrix::new(3, ids, data).unwrap()
    }

    #[test]
    fn candidate_count_and_self_match() {
        let topics = TopicSet::new(vec![topic("441", "lyme disease", 0)]).unwrap();
        let q = queries_matrix();
        let idx = CosineIndex::new(&q);
        let t = EmbeddingMatrix::new(3, vec![topic_row_id("441", TopicField::Title)], q.row(2).to_vec()).unwrap();
        let c = generate_candidates(&topics, &idx, &t, 3).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|c| c.field == TopicField::Title));
        assert_eq!(c[0].query_id, "q2");
        assert!((c[0].similarity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unknown_topic_is_error() {
        let topics = TopicSet::new(vec![topic("1", "x", 0)]).unwrap();
        let q = queries_matrix();
        let idx = CosineIndex::new(&q);
        let t = EmbeddingMatrix::new(3, vec!["2#title#0".into()], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(generate_candidates(&topics, &idx, &t, 2).is_err());
        let t = EmbeddingMatrix::new(3, vec!["1#variant#3".into()], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(generate_candidates(&topics, &idx, &t, 2).is_err());
    }

    #[test]
    fn planted_near_duplicates_are_found() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let dim = 32;
        let mut data: Vec<f32> = (0..500 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let topic_rows: Vec<Vec<f32>> = (0..6)
            .map(|_| crate::embed_index::normalize(&(0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>()).unwrap())
            .collect();
        // plant query 10*i next to topic row i
        for (i, row) in topic_rows.iter().enumerate() {
            for d in 0..dim {
                data[(10 * i) * dim + d] = row[d] + 1e-3 * rng.random_range(-1.0f32..1.0);
            }
        }
        let q = normalize_rows(&EmbeddingMatrix::new(dim, (0..500).map(|i| format!("q{i:03}")).collect(), data).unwrap()).unwrap();
        let topics = TopicSet::new((0..6).map(|i| topic(&format!("t{i}"), "x", 0)).collect()).unwrap();
        let t = EmbeddingMatrix::new(
            dim,
            (0..6).map(|i| topic_row_id(&format!("t{i}"), TopicField::Title)).collect(),
            topic_rows.concat(),
        )
        .unwrap();
        let c = generate_candidates(&topics, &CosineIndex::new(&q), &t, 5).unwrap();
        for (i, row) in topic_rows.iter().enumerate() {
            // naive check of the planted similarity
            let naive: f32 = q.row(10 * i).iter().zip(row).map(|(a, b)| a * b).sum();
            assert!(naive > 0.999);
            let hit = c
                .iter()
                .find(|c| c.topic_id == format!("t{i}") && c.query_id == format!("q{:03}", 10 * i))
                .expect("planted pair missing");
            assert!(hit.similarity > 0.999);
        }
    }

    #[test]
    fn sample_degenerate_single_bin() {
        let c: Vec<_> = (0..50).map(|i| cand("t", &format!("q{i:02}"), TopicField::Title, 0.85)).collect();
        let cfg = SampleConfig { n: 10, ..Default::default() };
        let s = stratified_sample(&c, &cfg, 1).unwrap();
        assert_eq!(s.rows.len(), 10);
        assert!(!s.insufficient);
        assert_eq!(s.bins.iter().filter(|b| b.population > 0).count(), 1);
    }

    #[test]
    fn sample_proportional_allocation() {
        let mut c: Vec<_> = (0..90).map(|i| cand("t", &format!("a{i:02}"), TopicField::Title, 0.81)).collect();
        c.extend((0..10).map(|i| cand("t", &format!("b{i:02}"), TopicField::Title, 0.95)));
        let cfg = SampleConfig { n: 10, ..Default::default() };
        let s = stratified_sample(&c, &cfg, 3).unwrap();
        let low = s.rows.iter().filter(|r| r.query_id.starts_with('a')).count();
        let high = s.rows.iter().filter(|r| r.query_id.starts_with('b')).count();
        assert_eq!((low, high), (9, 1));
        assert_eq!(s, stratified_sample(&c, &cfg, 3).unwrap());
        assert_ne!(s.rows, stratified_sample(&c, &cfg, 4).unwrap().rows);
    }

    #[test]
    fn sample_remainders_go_to_densest_bins() {
        assert_eq!(allocate(&[5, 3, 2], 4), vec![3, 1, 0]);
        assert_eq!(allocate(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(allocate(&[0, 0], 0), vec![0, 0]);
    }

    #[test]
    fn sample_insufficient_and_floor_exclusive() {
        let c = vec![
            cand("t", "q1", TopicField::Title, 0.8),
            cand("t", "q2", TopicField::Title, 0.9),
            cand("t", "q2", TopicField::Variant(0), 0.95),
            cand("t", "q3", TopicField::Title, 1.0),
        ];
        let s = stratified_sample(&c, &SampleConfig::default(), 0).unwrap();
        assert!(s.insufficient);
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.rows[0].query_id, "q2");
        assert_eq!(s.rows[0].field, TopicField::Variant(0));
    }

    #[test]
    fn calibration_examples() {
        let pairs = [(0.95, true), (0.93, true), (0.92, false), (0.91, true), (0.90, false)];
        let r = calibrate_threshold(&pairs, 0.9).unwrap();
        assert_eq!(r.threshold, 0.93);
        assert_eq!(r.achieved_precision, 1.0);
        assert_eq!(r.support, 2);

        let all_true = [(0.99, true), (0.85, true), (0.9, true)];
        let r = calibrate_threshold(&all_true, 0.9).unwrap();
        assert_eq!(r.threshold, 0.85);
        assert_eq!(r.achieved_precision, 1.0);

        assert_eq!(DEFAULT_THRESHOLD, 0.91);
        assert!(calibrate_threshold(&[(0.9, false)], 0.9).is_err());
        match calibrate_threshold(&[(0.9, false), (0.95, false), (0.8, true)], 0.9) {
            Err(Error::PrecisionUnreachable { best, .. }) => assert!((best - 1.0 / 3.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reformulation_examples() {
        let f = DEFAULT_THRESHOLD;
        assert_eq!(classify_reformulation("lyme disease", "lyme disease", 1.0, f), Reformulation::Identical);
        assert_eq!(classify_reformulation("lyme disease", "Disease, Lyme", 0.97, f), Reformulation::Identical);
        assert_eq!(classify_reformulation("lyme diseases", "lyme disease", 0.99, f), Reformulation::Identical);
        assert_eq!(classify_reformulation("lyme disease", "disease", 0.92, f), Reformulation::Generalization);
        assert_eq!(
            classify_reformulation("lyme disease", "symptoms of lyme disease in humans", 0.93, f),
            Reformulation::Specialization
        );
        assert_eq!(classify_reformulation("lyme disease", "tick borne illness", 0.95, f), Reformulation::Reformulation);
        assert_eq!(classify_reformulation("lyme disease", "tick borne illness", 0.5, f), Reformulation::DifferentTopic);
    }

    #[test]
    fn stemmer_folds_inflections() {
        for (a, b) in [("diseases", "disease"), ("studies", "study"), ("boxes", "box"), ("walking", "walk"), ("walked", "walk")] {
            assert_eq!(stem(a), stem(b), "{a} vs {b}");
        }
        assert_eq!(stem("lupus"), "lupus");
        assert_eq!(stem("class"), "class");
    }

    #[test]
    fn kappa_examples() {
        let a = vec![true, false, true];
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);

        let mut x = Vec::new();
        let mut y = Vec::new();
        for (va, vb, n) in [(true, true, 40), (false, false, 40), (true, false, 10), (false, true, 10)] {
            x.extend(std::iter::repeat_n(va, n));
            y.extend(std::iter::repeat_n(vb, n));
        }
        assert!((cohen_kappa(&x, &y).unwrap() - 0.6).abs() < 1e-12);

        let all_true = vec![true; 10];
        let half: Vec<bool> = (0..10).map(|i| i < 5).collect();
        assert!(cohen_kappa(&all_true, &half).unwrap().abs() < 1e-12);
        assert_eq!(cohen_kappa(&all_true, &all_true).unwrap(), 1.0);
        assert!(cohen_kappa(&all_true, &half[..3]).is_err());
        assert!(cohen_kappa::<bool>(&[], &[]).is_err());
    }

    #[test]
    fn report_counts_planted_leaks() {
        let mut c = vec![
            cand("1", "a", TopicField::Title, 0.99),
            cand("1", "a", TopicField::Variant(0), 0.97),
            cand("1", "b", TopicField::Variant(1), 0.95),
            cand("2", "c", TopicField::Description, 0.93),
            cand("3", "d", TopicField::Title, 0.92),
            cand("3", "e", TopicField::Variant(0), 0.96),
            cand("3", "z", TopicField::Title, 0.5),
        ];
        let coll = QueryCollection::new(
            ["a", "b", "c", "d", "e", "z"]
                .iter()
                .enumerate()
                .map(|(i, id)| Query {
                    id: id.to_string(),
                    text: "x".into(),
                    source: if i % 2 == 0 { Source::Msm } else { Source::Orcas },
                })
                .collect(),
        )
        .unwrap();
        let r = leakage_report(&c, 0.91, false, Some(&coll));
        assert_eq!(r.columns, ["MSM", "ORCAS", "ALL"]);
        let union = r.rows.iter().find(|r| r.field == "union").unwrap();
        assert_eq!(union.cells[2], TopicQueryCount { topics: 3, queries: 5 });
        assert_eq!(union.cells[0], TopicQueryCount { topics: 3, queries: 3 });
        let variants = r.rows.iter().find(|r| r.field == "variants").unwrap();
        assert_eq!(variants.cells[2], TopicQueryCount { topics: 2, queries: 3 });
        assert!(r.verified.is_none());
        assert!(r.to_table().contains("union"));

        c[0].label = Some(true);
        c[0].reformulation = Some(Reformulation::Identical);
        c[3].label = Some(false);
        c[3].reformulation = Some(Reformulation::DifferentTopic);
        let v = leakage_report(&c, 0.91, true, None);
        assert_eq!(v.columns, ["ALL"]);
        assert_eq!(v.rows[3].cells[0], TopicQueryCount { topics: 1, queries: 1 });
        let counts = v.verified.unwrap();
        assert_eq!(counts.true_pairs, TopicQueryCount { topics: 1, queries: 1 });
        assert_eq!(counts.false_pairs, TopicQueryCount { topics: 1, queries: 1 });
        assert_eq!(counts.reformulations["IDENTICAL"], 1);
    }

    #[test]
    fn review_keeps_top_depth_per_topic() {
        let c: Vec<_> = (0..8).map(|i| cand("t", &format!("q{i}"), TopicField::Title, 0.9 + i as f32 * 0.01)).collect();
        let r = review_candidates(&c, 0.91, 5);
        assert_eq!(r.len(), 5);
        assert_eq!(r[0].query_id, "q7");
        assert!(r.iter().all(|c| c.similarity >= 0.91));
    }

    proptest! {
        #[test]
        fn calibration_is_minimal(pairs in proptest::collection::vec((0u8..40, any::<bool>()), 1..40)) {
            let labeled: Vec<(f32, bool)> = pairs.iter().map(|&(s, l)| (0.6 + f32::from(s) * 0.01, l)).collect();
            let precision_at = |c: f32| {
                let sel: Vec<_> = labeled.iter().filter(|p| p.0 >= c).collect();
                sel.iter().filter(|p| p.1).count() as f64 / sel.len() as f64
            };
            let mut cutoffs: Vec<f32> = labeled.iter().map(|p| p.0).collect();
            cutoffs.sort_by(f32::total_cmp);
            cutoffs.dedup();
            let oracle = cutoffs.iter().copied().find(|&c| precision_at(c) >= 0.9);
            match (calibrate_threshold(&labeled, 0.9), oracle) {
                (Ok(r), Some(c)) => {
                    prop_assert_eq!(r.threshold, c);
                    prop_assert!(r.achieved_precision >= 0.9);
                }
                (Err(_), None) => {}
                (got, want) => prop_assert!(false, "got {:?}, oracle {:?}", got, want),
            }
        }

        #[test]
        fn report_is_monotone_in_theta(sims in proptest::collection::vec(0.5f32..1.0, 1..30), lo in 0.5f32..1.0, hi in 0.5f32..1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let c: Vec<_> = sims.iter().enumerate()
                .map(|(i, &s)| cand(&format!("t{}", i % 4), &format!("q{}", i % 7), TopicField::Variant(i as u32 % 3), s))
                .collect();
            let a = leakage_report(&c, lo, false, None);
            let b = leakage_report(&c, hi, false, None);
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                prop_assert!(rb.cells[0].topics <= ra.cells[0].topics);
                prop_assert!(rb.cells[0].queries <= ra.cells[0].queries);
            }
        }

        #[test]
        fn kappa_symmetric(pairs in proptest::collection::vec((0u8..3, 0u8..3), 1..50)) {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            prop_assert!((cohen_kappa(&a, &b).unwrap() - cohen_kappa(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn identical_class_ignores_order_and_case(words in proptest::collection::vec("[a-z]{4,8}", 1..5), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            let mut shuffled = words.clone();
            shuffled.shuffle(&mut crate::seed::rng(seed));
            let title = words.join(" ");
            let query = shuffled.join(" ").to_uppercase();
            prop_assert_eq!(classify_reformulation(&title, &query, 0.0, 0.91), Reformulation::Identical);
        }
    }
}
