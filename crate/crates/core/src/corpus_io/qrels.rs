use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use super::{for_each_line, open};
use crate::error::{Error, Result};

/// Graded relevance judgments keyed by topic, then document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment; a repeated (topic, doc) key is an error.
    pub fn insert(&mut self, topic: &str, doc: &str, grade: u32) -> Result<()> {
        let docs = self.judgments.entry(topic.to_string()).or_default();
        if docs.contains_key(doc) {
            return Err(Error::invalid(
                "corpus-io",
                format!("duplicate qrels key ({topic}, {doc})"),
            ));
        }
        docs.insert(doc.to_string(), grade);
        Ok(())
    }

    pub fn grade(&self, topic: &str, doc: &str) -> Option<u32> {
        self.judgments.get(topic).and_then(|d| d.get(doc)).copied()
    }

    pub fn topic(&self, topic: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, u32>)> {
        self.judgments.iter()
    }

    /// Number of (topic, doc) judgments.
    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical serialization: topics and documents in byte order.
    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (topic, docs) in &self.judgments {
            for (doc, grade) in docs {
                out.push_str(&format!("{topic} 0 {doc} {grade}\n"));
            }
        }
        out
    }
}

pub fn read_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for_each_line(reader, "qrels", |line_no, line| {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                "qrels",
                line_no,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let grade: u32 = cols[3]
            .parse()
            .map_err(|_| Error::parse("qrels", line_no, format!("grade {:?} is not a non-negative integer", cols[3])))?;
        qrels
            .insert(cols[0], cols[2], grade)
            .map_err(|_| Error::Duplicate {
                what: "qrels",
                line: line_no,
                id: format!("{} {}", cols[0], cols[2]),
            })
    })?;
    Ok(qrels)
}

pub fn parse_qrels(path: &Path) -> Result<Qrels> {
    read_qrels(open(path)?)
}
