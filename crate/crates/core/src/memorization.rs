//! Do models rank the documents they saw in training differently?
//!
//! Every leaked document gets a rank in the runs of a model trained with and
//! without leakage. Documents outside the re-ranked pool are placed by
//! their score, which comes from a sidecar re-score file, and anything that
//! falls past the pool depth lands at `depth + 1`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{RescoreTable, Run, RunEntry, TrainingSet};
use crate::error::{Error, Result};
use crate::eval::{sort_ties, DEFAULT_DEPTH};
use crate::{par, stats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LeakedDoc {
    pub topic_id: String,
    pub doc_id: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakedDocRecord {
    pub topic_id: String,
    pub doc_id: String,
    pub polarity: Polarity,
    pub score_with: f64,
    pub score_without: f64,
    pub rank_with: u32,
    pub rank_without: u32,
}

/// Rank of `doc_id` in a canonically sorted ranking cut at `depth`.
///
/// A document already ranked keeps its rank. Otherwise it is inserted by
/// (score desc, doc id asc); positions past `depth` become `depth + 1`.
pub fn hypothetical_rank(ranking: &[RunEntry], doc_id: &str, doc_score: f64, depth: usize) -> u32 {
    let pool = &ranking[..ranking.len().min(depth)];
    if let Some(i) = pool.iter().position(|e| e.doc_id == doc_id) {
        return i as u32 + 1;
    }
    let score = doc_score + 0.0;
    let ahead = pool
        .iter()
        .filter(|e| {
            let s = e.score + 0.0;
            s > score || (s == score && e.doc_id.as_bytes() < doc_id.as_bytes())
        })
        .count();
    (ahead.min(depth) + 1) as u32
}

/// The leaked documents of a training set: both documents of every leaked
/// record, attributed to the topic it leaks into.
pub fn leaked_docs(set: &TrainingSet) -> Vec<LeakedDoc> {
    let mut docs = BTreeSet::new();
    for r in set.leaked_records() {
        let Some(topic) = &r.leak_topic_id else { continue };
        for (doc, polarity) in [(&r.pos_doc_id, Polarity::Positive), (&r.neg_doc_id, Polarity::Negative)] {
            docs.insert(LeakedDoc {
                topic_id: topic.clone(),
                doc_id: doc.clone(),
                polarity,
            });
        }
    }
    docs.into_iter().collect()
}

/// One model's output under one training condition.
#[derive(Debug, Clone, Copy)]
pub struct Condition<'a> {
    pub run: &'a Run,
    pub rescore: &'a RescoreTable,
}

struct TopicView<'a> {
    ranking: Vec<RunEntry>,
    scores: HashMap<&'a str, f64>,
}

fn view<'a>(run: &'a Run, topic: &str) -> TopicView<'a> {
    let entries = run.topic(topic).unwrap_or(&[]);
    TopicView {
        ranking: sort_ties(entries),
        scores: entries.iter().map(|e| (e.doc_id.as_str(), e.score)).collect(),
    }
}

fn place(v: &TopicView<'_>, c: &Condition<'_>, d: &LeakedDoc, which: &str, depth: usize) -> Result<(f64, u32)> {
    let score = v
        .scores
        .get(d.doc_id.as_str())
        .copied()
        .or_else(|| c.rescore.get(&d.topic_id, &d.doc_id))
        .ok_or_else(|| {
            Error::invalid(
                "memorization",
                format!(
                    "no {which}-leakage score for topic {:?} doc {:?} in the run or the re-score file",
                    d.topic_id, d.doc_id
                ),
            )
        })?;
    Ok((score, hypothetical_rank(&v.ranking, &d.doc_id, score, depth)))
}

/// Score and hypothetical rank of every leaked document in both conditions.
pub fn leaked_records(
    with: Condition<'_>,
    without: Condition<'_>,
    leaked: &[LeakedDoc],
    depth: usize,
) -> Result<Vec<LeakedDocRecord>> {
    let mut by_topic: BTreeMap<&str, Vec<&LeakedDoc>> = BTreeMap::new();
    for d in leaked {
        by_topic.entry(d.topic_id.as_str()).or_default().push(d);
    }
    let topics: Vec<(&str, Vec<&LeakedDoc>)> = by_topic.into_iter().collect();
    let per_topic = par::map(&topics, |(topic, docs)| -> Result<Vec<LeakedDocRecord>> {
        let vw = view(with.run, topic);
        let vo = view(without.run, topic);
        docs.iter()
            .map(|d| {
                let (score_with, rank_with) = place(&vw, &with, d, "with", depth)?;
                let (score_without, rank_without) = place(&vo, &without, d, "without", depth)?;
                Ok(LeakedDocRecord {
                    topic_id: d.topic_id.clone(),
                    doc_id: d.doc_id.clone(),
                    polarity: d.polarity,
                    score_with,
                    score_without,
                    rank_with,
                    rank_without,
                })
            })
            .collect()
    });
    Ok(per_topic.into_iter().collect::<Result<Vec<_>>>()?.concat())
}

/// Mean and sample standard deviation over topics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub topics: usize,
}

impl Summary {
    pub fn of(per_topic: &[f64]) -> Self {
        Summary {
            mean: stats::mean(per_topic),
            sd: stats::sample_sd(per_topic),
            topics: per_topic.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Paired {
    pub with: Summary,
    pub without: Summary,
}

fn per_topic_mean<'a>(
    records: impl Iterator<Item = &'a LeakedDocRecord>,
    value: impl Fn(&LeakedDocRecord) -> f64,
) -> BTreeMap<&'a str, f64> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.topic_id.as_str()).or_default();
        e.0 += value(r);
        e.1 += 1;
    }
    acc.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect()
}

fn paired(records: &[LeakedDocRecord], with: impl Fn(&LeakedDocRecord) -> f64, without: impl Fn(&LeakedDocRecord) -> f64) -> Paired {
    let pos = || records.iter().filter(|r| r.polarity == Polarity::Positive);
    let w: Vec<f64> = per_topic_mean(pos(), with).into_values().collect();
    let wo: Vec<f64> = per_topic_mean(pos(), without).into_values().collect();
    Paired {
        with: Summary::of(&w),
        without: Summary::of(&wo),
    }
}

/// Per-topic mean rank of leaked positives, macro-averaged over the topics
/// that have any.
pub fn mean_leaked_rank(records: &[LeakedDocRecord]) -> Paired {
    paired(records, |r| f64::from(r.rank_with), |r| f64::from(r.rank_without))
}

/// As [`mean_leaked_rank`], over raw scores.
pub fn mean_leaked_score(records: &[LeakedDocRecord]) -> Paired {
    paired(records, |r| r.score_with, |r| r.score_without)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetDelta {
    pub summary: Summary,
    pub per_topic: BTreeMap<String, f64>,
    /// Topics without both a leaked positive and a leaked negative.
    pub excluded: Vec<String>,
}

/// Per topic, offset = mean negative rank − mean positive rank, and
/// delta = offset with leakage − offset without; macro-averaged.
pub fn rank_offset_delta(records: &[LeakedDocRecord]) -> OffsetDelta {
    let of = |p: Polarity, with: bool| {
        per_topic_mean(records.iter().filter(|r| r.polarity == p), |r| {
            f64::from(if with { r.rank_with } else { r.rank_without })
        })
    };
    let (pos_w, pos_wo, neg_w, neg_wo) = (
        of(Polarity::Positive, true),
        of(Polarity::Positive, false),
        of(Polarity::Negative, true),
        of(Polarity::Negative, false),
    );
    let topics: BTreeSet<&str> = records.iter().map(|r| r.topic_id.as_str()).collect();
    let mut per_topic = BTreeMap::new();
    let mut excluded = Vec::new();
    for t in topics {
        match (pos_w.get(t), neg_w.get(t)) {
            (Some(pw), Some(nw)) => {
                let delta = (nw - pw) - (neg_wo[t] - pos_wo[t]);
                per_topic.insert(t.to_string(), delta);
            }
            _ => {
                log::warn!("memorization: topic {t} lacks a leaked positive or negative; excluded from the offset delta");
                excluded.push(t.to_string());
            }
        }
    }
    let values: Vec<f64> = per_topic.values().copied().collect();
    OffsetDelta {
        summary: Summary::of(&values),
        per_topic,
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationReport {
    pub depth: usize,
    pub leaked_docs: usize,
    pub mean_rank: Paired,
    pub mean_score: Paired,
    pub rank_offset_delta: OffsetDelta,
    pub records: Vec<LeakedDocRecord>,
}

pub fn analyze(with: Condition<'_>, without: Condition<'_>, leaked: &[LeakedDoc], depth: usize) -> Result<MemorizationReport> {
    let records = leaked_records(with, without, leaked, depth)?;
    Ok(MemorizationReport {
        depth,
        leaked_docs: records.len(),
        mean_rank: mean_leaked_rank(&records),
        mean_score: mean_leaked_score(&records),
        rank_offset_delta: rank_offset_delta(&records),
        records,
    })
}

/// [`analyze`] at the standard pool depth.
pub fn analyze_default(with: Condition<'_>, without: Condition<'_>, leaked: &[LeakedDoc]) -> Result<MemorizationReport> {
    analyze(with, without, leaked, DEFAULT_DEPTH)
}

impl MemorizationReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:>18} {:>18} {:>7}", "leaked documents", "with leakage", "without leakage", "topics");
        let cell = |s: &Summary| format!("{:.2} ± {:.2}", s.mean, s.sd);
        for (name, p) in [("mean rank (relevant)", &self.mean_rank), ("mean score (relevant)", &self.mean_score)] {
            let _ = writeln!(out, "{:<22} {:>18} {:>18} {:>7}", name, cell(&p.with), cell(&p.without), p.with.topics);
        }
        let d = &self.rank_offset_delta.summary;
        let _ = writeln!(out, "{:<22} {:>18} {:>18} {:>7}", "rank offset delta", cell(d), "", d.topics);
        out
    }
}
