use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use super::{for_each_line, open};
use crate::error::{Error, Result};

/// Sidecar scores (`topic_id<TAB>doc_id<TAB>score`) for documents that a
/// model scored outside its re-ranked pool.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RescoreTable {
    scores: HashMap<(String, String), f64>,
}

impl RescoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, topic: &str, doc: &str, score: f64) -> bool {
        self.scores
            .insert((topic.to_string(), doc.to_string()), score)
            .is_none()
    }

    pub fn get(&self, topic: &str, doc: &str) -> Option<f64> {
        // HashMap<(String, String)> cannot be probed with borrowed pairs
        self.scores.get(&(topic.to_string(), doc.to_string())).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

pub fn read_rescore<R: BufRead>(reader: R) -> Result<RescoreTable> {
    let mut table = RescoreTable::new();
    for_each_line(reader, "re-score file", |line_no, line| {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse("re-score file", line_no, "expected topic_id<TAB>doc_id<TAB>score"));
        }
        let score: f64 = cols[2]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse("re-score file", line_no, format!("score {:?} is not a finite number", cols[2])))?;
        if !table.insert(cols[0], cols[1], score) {
            return Err(Error::Duplicate {
                what: "re-score file",
                line: line_no,
                id: format!("{} {}", cols[0], cols[1]),
            });
        }
        Ok(())
    })?;
    Ok(table)
}

pub fn parse_rescore(path: &Path) -> Result<RescoreTable> {
    read_rescore(open(path)?)
}
