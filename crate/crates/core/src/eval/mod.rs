//! Effectiveness metrics over TREC runs, significance testing, and the
//! cross-validated training-size grid search.
//!
//! All metrics score a topic's ranking after [`sort_ties`]: score
//! descending, then document id ascending by bytes. Topics that are absent
//! from the qrels or have no judged relevant document (grade >= 1) are left
//! out of means and listed in [`MetricResult::excluded`].

mod cv;
mod significance;
mod tables;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{Qrels, Run, RunEntry};
use crate::par;

pub use cv::{cross_validate, ConditionCv, CvReport, ScoreGrid};
pub use significance::{bonferroni, compare_to_baseline, paired_t_test, PairwiseTest, SignificanceReport, SignificanceResult};
pub use tables::{read_grid_csv, read_score_table, score_table_csv};

/// Default re-ranking depth.
pub const DEFAULT_DEPTH: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Ndcg { k: usize },
    P1,
    Mfr { depth: usize },
}

impl Metric {
    pub const NDCG10: Metric = Metric::Ndcg { k: 10 };
    pub const MFR: Metric = Metric::Mfr { depth: DEFAULT_DEPTH };

    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::Mfr { .. })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg { k } => write!(f, "ndcg@{k}"),
            Metric::P1 => f.write_str("p@1"),
            Metric::Mfr { depth } => write!(f, "mfr@{depth}"),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let (name, param) = match lower.split_once('@') {
            Some((n, p)) => (n, Some(p)),
            None => (lower.as_str(), None),
        };
        let num = |default: usize| -> Result<usize, String> {
            match param {
                None => Ok(default),
                Some(p) => p
                    .parse()
                    .ok()
                    .filter(|&v| v > 0)
                    .ok_or_else(|| format!("bad cutoff in metric {s:?}")),
            }
        };
        match name {
            "ndcg" => Ok(Metric::Ndcg { k: num(10)? }),
            "p" | "prec" | "precision" if param == Some("1") => Ok(Metric::P1),
            "p1" => Ok(Metric::P1),
            "mfr" => Ok(Metric::Mfr { depth: num(DEFAULT_DEPTH)? }),
            _ => Err(format!("unknown metric {s:?} (expected ndcg@k, p@1, or mfr[@depth])")),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// nDCG gain applied to a relevance grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `2^grade - 1`
    #[default]
    Exponential,
    /// `grade`
    Linear,
}

impl Gain {
    pub fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
            Gain::Linear => f64::from(grade),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub topic_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: Metric,
    pub per_topic: BTreeMap<String, f64>,
    pub mean: f64,
    pub topics_evaluated: usize,
    #[serde(default)]
    pub excluded: Vec<Exclusion>,
}

impl MetricResult {
    pub fn from_per_topic(metric: Metric, per_topic: BTreeMap<String, f64>, excluded: Vec<Exclusion>) -> Self {
        let n = per_topic.len();
        let mean = if n == 0 {
            0.0
        } else {
            per_topic.values().sum::<f64>() / n as f64
        };
        MetricResult {
            metric,
            per_topic,
            mean,
            topics_evaluated: n,
            excluded,
        }
    }
}

/// Canonical ranking: score descending, doc id ascending; ranks 1..n.
pub fn sort_ties(entries: &[RunEntry]) -> Vec<RunEntry> {
    let mut sorted = entries.to_vec();
    sorted.sort_by(|a, b| {
        (b.score + 0.0)
            .total_cmp(&(a.score + 0.0))
            .then_with(|| a.doc_id.as_bytes().cmp(b.doc_id.as_bytes()))
    });
    for (i, e) in sorted.iter_mut().enumerate() {
        e.rank = i as u32 + 1;
    }
    sorted
}

/// Score every run topic with `per_topic`, applying the exclusion rules.
fn evaluate_with<F>(run: &Run, qrels: &Qrels, metric: Metric, per_topic: F) -> MetricResult
where
    F: Fn(&[RunEntry], &BTreeMap<String, u32>) -> f64 + Sync + Send,
{
    let topics: Vec<(&str, &[RunEntry])> = run.topics().collect();
    let scored = par::map(&topics, |(topic, entries)| {
        let Some(judged) = qrels.topic(topic) else {
            return Err("topic absent from qrels");
        };
        if !judged.values().any(|&g| g >= 1) {
            return Err("no judged relevant document");
        }
        let ranking = sort_ties(entries);
        Ok(per_topic(&ranking, judged))
    });
    let mut values = BTreeMap::new();
    let mut excluded = Vec::new();
    for ((topic, _), outcome) in topics.iter().zip(scored) {
        match outcome {
            Ok(v) => {
                values.insert(topic.to_string(), v);
            }
            Err(reason) => {
                log::warn!("eval: {metric}: excluding topic {topic}: {reason}");
                excluded.push(Exclusion {
                    topic_id: topic.to_string(),
                    reason: reason.to_string(),
                });
            }
        }
    }
    MetricResult::from_per_topic(metric, values, excluded)
}

fn grade_of(judged: &BTreeMap<String, u32>, doc: &str) -> u32 {
    judged.get(doc).copied().unwrap_or(0)
}

pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize, gain: Gain) -> MetricResult {
    evaluate_with(run, qrels, Metric::Ndcg { k }, |ranking, judged| {
        let dcg: f64 = ranking
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, e)| gain.apply(grade_of(judged, &e.doc_id)) / ((i + 2) as f64).log2())
            .sum();
        let mut ideal: Vec<u32> = judged.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| gain.apply(g) / ((i + 2) as f64).log2())
            .sum();
        // an empty ranking sums to -0.0
        dcg / idcg + 0.0
    })
}

pub fn precision_at_1(run: &Run, qrels: &Qrels) -> MetricResult {
    evaluate_with(run, qrels, Metric::P1, |ranking, judged| match ranking.first() {
        Some(e) if grade_of(judged, &e.doc_id) >= 1 => 1.0,
        _ => 0.0,
    })
}

/// First rank of a relevant document within `depth`; `depth + 1` if none.
pub fn mfr(run: &Run, qrels: &Qrels, depth: usize) -> MetricResult {
    evaluate_with(run, qrels, Metric::Mfr { depth }, |ranking, judged| {
        ranking
            .iter()
            .take(depth)
            .position(|e| grade_of(judged, &e.doc_id) >= 1)
            .map_or(depth + 1, |p| p + 1) as f64
    })
}

pub fn evaluate(run: &Run, qrels: &Qrels, metric: Metric, gain: Gain) -> MetricResult {
    match metric {
        Metric::Ndcg { k } => ndcg_at_k(run, qrels, k, gain),
        Metric::P1 => precision_at_1(run, qrels),
        Metric::Mfr { depth } => mfr(run, qrels, depth),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run(rows: &[(&str, &str, f64)]) -> Run {
        let mut grouped: Vec<(String, Vec<RunEntry>)> = Vec::new();
        for (t, d, s) in rows {
            match grouped.iter_mut().find(|(x, _)| x == t) {
                Some((_, v)) => {
                    let r = v.len() as u32 + 1;
                    v.push(RunEntry::new(*d, r, *s, "t"))
                }
                None => grouped.push((t.to_string(), vec![RunEntry::new(*d, 1, *s, "t")])),
            }
        }
        Run::from_topics(grouped).unwrap()
    }

    fn qrels(rows: &[(&str, &str, u32)]) -> Qrels {
        let mut q = Qrels::new();
        for (t, d, g) in rows {
            q.insert(t, d, *g).unwrap();
        }
        q
    }

    #[test]
    fn sort_ties_rules() {
        let e = vec![RunEntry::new("d2", 1, 1.0, "t"), RunEntry::new("d1", 2, 1.0, "t")];
        let s = sort_ties(&e);
        assert_eq!(s[0].doc_id, "d1");
        assert_eq!(s[0].rank, 1);
        assert_eq!(s[1].rank, 2);

        let e: Vec<_> = (0..5).map(|i| RunEntry::new(format!("z{i}"), 9, 10.0 - i as f64, "t")).collect();
        let s = sort_ties(&e);
        assert!(s.iter().zip(&e).all(|(a, b)| a.doc_id == b.doc_id));
        assert_eq!(s.iter().map(|x| x.rank).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
    }

    #[test]
    fn sort_ties_matches_reference_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let e: Vec<_> = (0..100)
            .map(|i| RunEntry::new(format!("doc{}", rng.random_range(0..1_000_000) * 1000 + i), 1, f64::from(rng.random_range(0..10)), "t"))
            .collect();
        // reference: decorate with (negated score, id) tuples and use the tuple ordering
        let mut reference: Vec<(i64, String)> = e.iter().map(|x| (-(x.score as i64), x.doc_id.clone())).collect();
        reference.sort();
        let got: Vec<String> = sort_ties(&e).into_iter().map(|x| x.doc_id).collect();
        assert_eq!(got, reference.into_iter().map(|x| x.1).collect::<Vec<_>>());
    }

    #[test]
    fn ndcg_examples() {
        let r = run(&[("1", "a", 1.0)]);
        let q = qrels(&[("1", "a", 1)]);
        assert_eq!(ndcg_at_k(&r, &q, 10, Gain::Exponential).mean, 1.0);

        let r = run(&[("1", "d3", 3.0), ("1", "d1", 2.0), ("1", "d2", 1.0)]);
        let q = qrels(&[("1", "d1", 2), ("1", "d2", 1), ("1", "d3", 0)]);
        let m = ndcg_at_k(&r, &q, 3, Gain::Exponential);
        let dcg = 3.0 / 3f64.log2() + 1.0 / 4f64.log2();
        let idcg = 3.0 + 1.0 / 3f64.log2();
        assert_abs_diff_eq!(dcg, 2.3928, epsilon = 1e-4);
        assert_abs_diff_eq!(idcg, 3.6309, epsilon = 1e-4);
        assert_abs_diff_eq!(m.mean, 0.6590, epsilon = 1e-4);
        assert_abs_diff_eq!(m.mean, dcg / idcg, epsilon = 1e-12);
    }

    #[test]
    fn topics_without_relevant_judgments_are_excluded() {
        let r = run(&[("1", "a", 1.0), ("2", "b", 1.0), ("3", "c", 1.0)]);
        let q = qrels(&[("1", "a", 1), ("2", "b", 0)]);
        for m in [Metric::NDCG10, Metric::P1, Metric::MFR] {
            let res = evaluate(&r, &q, m, Gain::Exponential);
            assert_eq!(res.topics_evaluated, 1, "{m}");
            assert_eq!(res.excluded.len(), 2);
            assert_eq!(res.excluded[0].topic_id, "2");
            assert_eq!(res.excluded[1].topic_id, "3");
        }
    }

    #[test]
    fn precision_examples() {
        let q = qrels(&[("1", "a", 1), ("1", "b", 0)]);
        assert_eq!(precision_at_1(&run(&[("1", "a", 2.0), ("1", "b", 1.0)]), &q).mean, 1.0);
        assert_eq!(precision_at_1(&run(&[("1", "x", 2.0), ("1", "a", 1.0)]), &q).mean, 0.0);

        let mut rows = Vec::new();
        let mut judged = Vec::new();
        let names: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
        for (i, t) in names.iter().enumerate() {
            rows.push((t.as_str(), "top", 2.0));
            rows.push((t.as_str(), "rel", 1.0));
            judged.push((t.as_str(), "rel", 1));
            judged.push((t.as_str(), "top", u32::from(i < 6)));
        }
        assert_abs_diff_eq!(precision_at_1(&run(&rows), &qrels(&judged)).mean, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn mfr_examples() {
        let q = qrels(&[("1", "r", 1), ("2", "r", 1)]);
        let r = run(&[("1", "r", 9.0), ("1", "x", 1.0), ("2", "r", 9.0)]);
        assert_eq!(mfr(&r, &q, 100).mean, 1.0);

        let mut rows = vec![];
        for (t, first) in [("1", 2), ("2", 5)] {
            for i in 1..=6 {
                let doc = if i == first { "r" } else { ["a", "b", "c", "d", "e", "f"][i - 1] };
                rows.push((t, doc, 10.0 - i as f64));
            }
        }
        assert_eq!(mfr(&run(&rows), &q, 100).mean, 3.5);

        let rows: Vec<(String, f64)> = (0..100).map(|i| (format!("n{i:03}"), 200.0 - i as f64)).collect();
        let rows: Vec<(&str, &str, f64)> = rows.iter().map(|(d, s)| ("1", d.as_str(), *s)).collect();
        let res = mfr(&run(&rows), &qrels(&[("1", "missing", 1)]), 100);
        assert_eq!(res.per_topic["1"], 101.0);
    }

    #[test]
    fn equal_score_permutations_do_not_change_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut rows: Vec<(String, f64)> = (0..30).map(|i| (format!("d{i}"), f64::from(rng.random_range(0..4)))).collect();
        let judged: Vec<(String, u32)> = (0..30).map(|i| (format!("d{i}"), rng.random_range(0..3))).collect();
        let q = {
            let mut q = Qrels::new();
            for (d, g) in &judged {
                q.insert("1", d, *g).unwrap();
            }
            q
        };
        let score = |rows: &[(String, f64)]| {
            let r: Vec<(&str, &str, f64)> = rows.iter().map(|(d, s)| ("1", d.as_str(), *s)).collect();
            let r = run(&r);
            [Metric::NDCG10, Metric::P1, Metric::MFR].map(|m| evaluate(&r, &q, m, Gain::Exponential).mean)
        };
        let base = score(&rows);
        for _ in 0..20 {
            rows.shuffle(&mut rng);
            assert_eq!(score(&rows), base);
        }
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("ndcg@10".parse::<Metric>().unwrap(), Metric::NDCG10);
        assert_eq!("nDCG".parse::<Metric>().unwrap(), Metric::NDCG10);
        assert_eq!("p@1".parse::<Metric>().unwrap(), Metric::P1);
        assert_eq!("mfr".parse::<Metric>().unwrap(), Metric::MFR);
        assert_eq!(Metric::MFR.to_string().parse::<Metric>().unwrap(), Metric::MFR);
        assert!("map".parse::<Metric>().is_err());
        assert!("p@5".parse::<Metric>().is_err());
    }

    #[test]
    fn linear_gain() {
        let r = run(&[("1", "b", 2.0), ("1", "a", 1.0)]);
        let q = qrels(&[("1", "a", 2), ("1", "b", 1)]);
        let m = ndcg_at_k(&r, &q, 10, Gain::Linear);
        let expected = (1.0 + 2.0 / 3f64.log2()) / (2.0 + 1.0 / 3f64.log2());
        assert_abs_diff_eq!(m.mean, expected, epsilon = 1e-12);
    }

    #[test]
    fn empty_ranking_scores_positive_zero() {
        let run = Run::from_topics(vec![("t".into(), Vec::new())]).unwrap();
        let mut qrels = Qrels::new();
        qrels.insert("t", "d", 1).unwrap();
        let v = ndcg_at_k(&run, &qrels, 10, Gain::Exponential).per_topic["t"];
        assert!(v == 0.0 && v.is_sign_positive());
    }
}
