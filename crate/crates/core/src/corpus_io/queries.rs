use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{for_each_line, open};
use crate::error::{Error, Result};

/// Collection a training query was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "MSM")]
    Msm,
    #[serde(rename = "ORCAS")]
    Orcas,
    #[serde(rename = "OTHER")]
    Other,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Msm => "MSM",
            Source::Orcas => "ORCAS",
            Source::Other => "OTHER",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MSM" | "MSMARCO" => Ok(Source::Msm),
            "ORCAS" => Ok(Source::Orcas),
            "OTHER" => Ok(Source::Other),
            _ => Err(format!("unknown source {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryFormat {
    /// `id<TAB>text`, one per line. Every row gets the given source.
    Tsv(Source),
    /// `{"id", "text", "source"}` objects; `source` falls back to the given one.
    Jsonl(Source),
}

/// Training queries in file order, indexed by id.
#[derive(Debug, Clone, Default)]
pub struct QueryCollection {
    entries: Vec<Query>,
    index: HashMap<String, usize>,
}

impl QueryCollection {
    pub fn new(entries: Vec<Query>) -> Result<Self> {
        let mut coll = QueryCollection::default();
        for (i, q) in entries.into_iter().enumerate() {
            coll.push(q, i + 1)?;
        }
        Ok(coll)
    }

    fn push(&mut self, q: Query, line: usize) -> Result<()> {
        if q.id.is_empty() {
            return Err(Error::parse("queries", line, "empty query id"));
        }
        if q.text.trim().is_empty() {
            return Err(Error::parse("queries", line, format!("empty text for {:?}", q.id)));
        }
        if self.index.contains_key(&q.id) {
            return Err(Error::Duplicate {
                what: "queries",
                line,
                id: q.id,
            });
        }
        self.index.insert(q.id.clone(), self.entries.len());
        self.entries.push(q);
        Ok(())
    }

    pub fn entries(&self) -> &[Query] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&Query> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Merge another collection into this one; ids must stay unique.
    pub fn extend(&mut self, other: QueryCollection) -> Result<()> {
        let base = self.entries.len();
        for (i, q) in other.entries.into_iter().enumerate() {
            self.push(q, base + i + 1)?;
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for q in &self.entries {
            out.push_str(&q.id);
            out.push('\t');
            out.push_str(&q.text);
            out.push('\n');
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.entries {
            out.push_str(&serde_json::to_string(q).expect("query serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Deserialize)]
struct JsonQuery {
    id: String,
    text: String,
    #[serde(default)]
    source: Option<Source>,
}

pub fn read_queries<R: BufRead>(reader: R, format: QueryFormat) -> Result<QueryCollection> {
    let mut coll = QueryCollection::default();
    for_each_line(reader, "queries", |line_no, line| {
        let q = match format {
            QueryFormat::Tsv(source) => {
                let mut parts = line.split('\t');
                let (Some(id), Some(text), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(Error::parse(
                        "queries",
                        line_no,
                        "expected exactly one TAB separating id and text",
                    ));
                };
                Query {
                    id: id.to_string(),
                    text: text.to_string(),
                    source,
                }
            }
            QueryFormat::Jsonl(source) => {
                let raw: JsonQuery = serde_json::from_str(line)
                    .map_err(|e| Error::parse("queries", line_no, e.to_string()))?;
                Query {
                    id: raw.id,
                    text: raw.text,
                    source: raw.source.unwrap_or(source),
                }
            }
        };
        coll.push(q, line_no)
    })?;
    Ok(coll)
}

pub fn parse_queries(path: &Path, format: QueryFormat) -> Result<QueryCollection> {
    read_queries(open(path)?, format)
}
