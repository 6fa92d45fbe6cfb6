use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use super::{for_each_line, open};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
    pub tag: String,
}

impl RunEntry {
    pub fn new(doc_id: impl Into<String>, rank: u32, score: f64, tag: impl Into<String>) -> Self {
        RunEntry {
            doc_id: doc_id.into(),
            rank,
            score,
            tag: tag.into(),
        }
    }
}

/// A TREC run: per-topic ranked entries, topics and entries in input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    topics: Vec<(String, Vec<RunEntry>)>,
    index: HashMap<String, usize>,
}

impl Run {
    /// Builds a run from grouped entries; a document repeated within a topic
    /// or a topic listed twice is an error.
    pub fn from_topics(topics: Vec<(String, Vec<RunEntry>)>) -> Result<Self> {
        let mut run = Run::default();
        for (topic, entries) in topics {
            if run.index.contains_key(&topic) {
                return Err(Error::invalid("corpus-io", format!("run topic {topic:?} listed twice")));
            }
            let mut seen = HashSet::with_capacity(entries.len());
            for e in &entries {
                if !seen.insert(e.doc_id.as_str()) {
                    return Err(Error::invalid(
                        "corpus-io",
                        format!("duplicate document {:?} in run topic {topic:?}", e.doc_id),
                    ));
                }
            }
            run.index.insert(topic.clone(), run.topics.len());
            run.topics.push((topic, entries));
        }
        Ok(run)
    }

    pub fn topic(&self, topic: &str) -> Option<&[RunEntry]> {
        self.index.get(topic).map(|&i| self.topics[i].1.as_slice())
    }

    pub fn topics(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.topics.iter().map(|(t, e)| (t.as_str(), e.as_slice()))
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = &str> {
        self.topics.iter().map(|(t, _)| t.as_str())
    }

    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn num_entries(&self) -> usize {
        self.topics.iter().map(|(_, e)| e.len()).sum()
    }

    /// Copy with every topic sorted by (score desc, doc id asc) and ranks
    /// reassigned 1..n.
    pub fn canonicalized(&self) -> Run {
        let topics = self
            .topics
            .iter()
            .map(|(t, e)| (t.clone(), crate::eval::sort_ties(e)))
            .collect();
        Run {
            topics,
            index: self.index.clone(),
        }
    }

    /// Six-column TREC serialization in stored order. Scores use the
    /// shortest decimal form that reads back to the same `f64`.
    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (topic, entries) in &self.topics {
            for e in entries {
                out.push_str(&format!(
                    "{topic} Q0 {} {} {} {}\n",
                    e.doc_id, e.rank, e.score, e.tag
                ));
            }
        }
        out
    }
}

pub fn read_run<R: BufRead>(reader: R) -> Result<Run> {
    let mut topics: Vec<(String, Vec<RunEntry>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen: Vec<HashSet<String>> = Vec::new();
    for_each_line(reader, "run", |line_no, line| {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(
                "run",
                line_no,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: u32 = cols[3]
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| Error::parse("run", line_no, format!("rank {:?} is not a positive integer", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse("run", line_no, format!("score {:?} is not a finite number", cols[4])))?;
        let slot = *index.entry(cols[0].to_string()).or_insert_with(|| {
            topics.push((cols[0].to_string(), Vec::new()));
            seen.push(HashSet::new());
            topics.len() - 1
        });
        if !seen[slot].insert(cols[2].to_string()) {
            return Err(Error::Duplicate {
                what: "run",
                line: line_no,
                id: format!("{} {}", cols[0], cols[2]),
            });
        }
        topics[slot].1.push(RunEntry::new(cols[2], rank, score, cols[5]));
        Ok(())
    })?;
    Ok(Run { topics, index })
}

pub fn parse_run(path: &Path) -> Result<Run> {
    read_run(open(path)?)
}
