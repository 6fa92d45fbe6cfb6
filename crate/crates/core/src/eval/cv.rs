//! Cross-validated selection of the training-set size.
//!
//! Topics are sorted by id, shuffled with the fold seed, and dealt
//! round-robin into folds. For each held-out fold, the size with the best
//! mean target score over the remaining topics (seeds averaged first) is
//! chosen, and the held-out topics are scored at that size.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

type SeedScores = BTreeMap<u64, BTreeMap<String, f64>>;

/// Per-topic scores keyed by (condition, training size, training seed).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreGrid {
    cells: BTreeMap<(String, u64), SeedScores>,
}

impl ScoreGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, condition: &str, size: u64, seed: u64, topic: &str, value: f64) -> Result<()> {
        let slot = self
            .cells
            .entry((condition.to_string(), size))
            .or_default()
            .entry(seed)
            .or_default();
        if slot.insert(topic.to_string(), value).is_some() {
            return Err(Error::invalid(
                "eval",
                format!("duplicate grid entry ({condition}, {size}, seed {seed}, topic {topic})"),
            ));
        }
        Ok(())
    }

    pub fn conditions(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|(c, _)| c.as_str()).collect()
    }

    pub fn sizes(&self) -> BTreeSet<u64> {
        self.cells.keys().map(|(_, s)| *s).collect()
    }

    /// Seed-averaged score per topic for one cell.
    fn seed_mean(&self, condition: &str, size: u64) -> Option<BTreeMap<String, f64>> {
        let seeds = self.cells.get(&(condition.to_string(), size))?;
        let mut sum: BTreeMap<String, f64> = BTreeMap::new();
        for scores in seeds.values() {
            for (t, v) in scores {
                *sum.entry(t.clone()).or_default() += v;
            }
        }
        let n = seeds.len() as f64;
        Some(sum.into_iter().map(|(t, v)| (t, v / n)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCv {
    /// Selected training size per fold.
    pub selections: Vec<u64>,
    /// Held-out score of every topic at its fold's selected size.
    pub per_topic: BTreeMap<String, f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_seed: u64,
    pub lower_is_better: bool,
    pub folds: Vec<Vec<String>>,
    pub sizes: Vec<u64>,
    pub conditions: BTreeMap<String, ConditionCv>,
}

pub fn cross_validate(grid: &ScoreGrid, folds: usize, lower_is_better: bool, fold_seed: u64) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::invalid("eval", "cross-validation needs at least 2 folds"));
    }
    let sizes: Vec<u64> = grid.sizes().into_iter().collect();
    let conditions: Vec<String> = grid.conditions().into_iter().map(str::to_string).collect();
    if conditions.is_empty() {
        return Err(Error::invalid("eval", "empty score grid"));
    }

    // every cell and every seed must cover the same topics
    let mut topics: Option<BTreeSet<&String>> = None;
    for c in &conditions {
        for &s in &sizes {
            let cell = grid.cells.get(&(c.clone(), s)).ok_or_else(|| {
                Error::invalid("eval", format!("grid cell missing: condition {c}, size {s}"))
            })?;
            for (seed, scores) in cell {
                let these: BTreeSet<&String> = scores.keys().collect();
                match &topics {
                    None => topics = Some(these),
                    Some(t) if *t != these => {
                        return Err(Error::invalid(
                            "eval",
                            format!("grid cell ({c}, {s}, seed {seed}) covers a different topic set"),
                        ))
                    }
                    Some(_) => {}
                }
            }
        }
    }
    let mut topics: Vec<String> = topics.unwrap_or_default().into_iter().cloned().collect();
    if topics.len() < folds {
        return Err(Error::invalid(
            "eval",
            format!("{} topics cannot fill {folds} folds", topics.len()),
        ));
    }

    topics.shuffle(&mut seed::rng(fold_seed));
    let mut assignment: Vec<Vec<String>> = vec![Vec::new(); folds];
    for (i, t) in topics.into_iter().enumerate() {
        assignment[i % folds].push(t);
    }
    for f in &mut assignment {
        f.sort();
    }

    let mut out = BTreeMap::new();
    for c in &conditions {
        let means: Vec<BTreeMap<String, f64>> = sizes
            .iter()
            .map(|&s| grid.seed_mean(c, s).expect("cell checked above"))
            .collect();
        let mut selections = Vec::with_capacity(folds);
        let mut per_topic = BTreeMap::new();
        for held_out in &assignment {
            let train: Vec<&String> = means[0].keys().filter(|t| !held_out.contains(t)).collect();
            let best = select_size(&means, &train, lower_is_better);
            selections.push(sizes[best]);
            for t in held_out {
                per_topic.insert(t.clone(), means[best][t]);
            }
        }
        let mean = per_topic.values().sum::<f64>() / per_topic.len() as f64;
        out.insert(
            c.clone(),
            ConditionCv {
                selections,
                per_topic,
                mean,
            },
        );
    }

    Ok(CvReport {
        fold_seed,
        lower_is_better,
        folds: assignment,
        sizes,
        conditions: out,
    })
}

/// Index of the best size on `train`; ties go to the smaller size.
fn select_size(means: &[BTreeMap<String, f64>], train: &[&String], lower_is_better: bool) -> usize {
    let score = |m: &BTreeMap<String, f64>| train.iter().map(|t| m[*t]).sum::<f64>() / train.len() as f64;
    let mut best = 0;
    let mut best_score = score(&means[0]);
    for (i, m) in means.iter().enumerate().skip(1) {
        let s = score(m);
        let better = if lower_is_better { s < best_score } else { s > best_score };
        if better {
            best = i;
            best_score = s;
        }
    }
    best
}
