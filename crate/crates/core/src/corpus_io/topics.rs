use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{for_each_line, open};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub narrative: String,
    #[serde(default)]
    pub variants: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct TopicSet {
    topics: Vec<Topic>,
    index: HashMap<String, usize>,
}

impl TopicSet {
    pub fn new(topics: Vec<Topic>) -> Result<Self> {
        let mut set = TopicSet::default();
        for (i, t) in topics.into_iter().enumerate() {
            set.push(t, i + 1)?;
        }
        Ok(set)
    }

    fn push(&mut self, t: Topic, line: usize) -> Result<()> {
        if t.topic_id.is_empty() {
            return Err(Error::parse("topics", line, "empty topic_id"));
        }
        if t.title.trim().is_empty() {
            return Err(Error::parse("topics", line, format!("empty title for topic {:?}", t.topic_id)));
        }
        if self.index.contains_key(&t.topic_id) {
            return Err(Error::Duplicate {
                what: "topics",
                line,
                id: t.topic_id,
            });
        }
        self.index.insert(t.topic_id.clone(), self.topics.len());
        self.topics.push(t);
        Ok(())
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn get(&self, id: &str) -> Option<&Topic> {
        self.index.get(id).map(|&i| &self.topics[i])
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.topics {
            out.push_str(&serde_json::to_string(t).expect("topic serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn read_topics<R: BufRead>(reader: R) -> Result<TopicSet> {
    let mut set = TopicSet::default();
    for_each_line(reader, "topics", |line_no, line| {
        let t: Topic = serde_json::from_str(line).map_err(|e| Error::parse("topics", line_no, e.to_string()))?;
        set.push(t, line_no)
    })?;
    Ok(set)
}

pub fn parse_topics(path: &Path) -> Result<TopicSet> {
    read_topics(open(path)?)
}
