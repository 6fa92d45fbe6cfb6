//! Labeling sheets: `topic_id,query_id,field,similarity,label` CSV, with an
//! optional trailing `reformulation` column once candidates are classified.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::open;
use crate::error::{Error, Result};

/// Which topic field a candidate matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TopicField {
    Title,
    Description,
    Variant(u32),
}

impl TopicField {
    /// Field name without the variant index.
    pub fn kind(&self) -> &'static str {
        match self {
            TopicField::Title => "title",
            TopicField::Description => "description",
            TopicField::Variant(_) => "variant",
        }
    }
}

impl fmt::Display for TopicField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopicField::Variant(i) => write!(f, "variant#{i}"),
            other => f.write_str(other.kind()),
        }
    }
}

impl FromStr for TopicField {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "title" => Ok(TopicField::Title),
            "description" => Ok(TopicField::Description),
            _ => s
                .strip_prefix("variant#")
                .and_then(|i| i.parse().ok())
                .map(TopicField::Variant)
                .ok_or_else(|| format!("unknown field {s:?}")),
        }
    }
}

impl Serialize for TopicField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TopicField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Query reformulation types relative to a topic title.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reformulation {
    Identical,
    Generalization,
    Specialization,
    Reformulation,
    DifferentTopic,
}

impl Reformulation {
    pub const ALL: [Reformulation; 5] = [
        Reformulation::Identical,
        Reformulation::Generalization,
        Reformulation::Specialization,
        Reformulation::Reformulation,
        Reformulation::DifferentTopic,
    ];

    /// Whether this type marks a true leak.
    pub fn is_leak(self) -> bool {
        self != Reformulation::DifferentTopic
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Reformulation::Identical => "IDENTICAL",
            Reformulation::Generalization => "GENERALIZATION",
            Reformulation::Specialization => "SPECIALIZATION",
            Reformulation::Reformulation => "REFORMULATION",
            Reformulation::DifferentTopic => "DIFFERENT_TOPIC",
        }
    }
}

impl FromStr for Reformulation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Reformulation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown reformulation type {s:?}"))
    }
}

/// A (topic, query) match on one topic field; one labeling-sheet row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageCandidate {
    pub topic_id: String,
    pub query_id: String,
    pub field: TopicField,
    pub similarity: f32,
    pub label: Option<bool>,
    pub reformulation: Option<Reformulation>,
}

const BASE_HEADER: [&str; 5] = ["topic_id", "query_id", "field", "similarity", "label"];

pub fn read_sheet<R: Read>(reader: R) -> Result<Vec<LeakageCandidate>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse("labeling sheet", 1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    let extended = match cols.as_slice() {
        c if c == BASE_HEADER => false,
        [base @ .., "reformulation"] if base == BASE_HEADER => true,
        _ => {
            return Err(Error::parse(
                "labeling sheet",
                1,
                format!("unexpected header {cols:?}"),
            ))
        }
    };
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse("labeling sheet", line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::parse("labeling sheet", line, msg);
        let field = record[2].parse::<TopicField>().map_err(bad)?;
        let similarity: f32 = record[3]
            .parse()
            .ok()
            .filter(|s: &f32| (-1.0..=1.0).contains(s))
            .ok_or_else(|| bad(format!("similarity {:?} not a number in [-1, 1]", &record[3])))?;
        let label = match &record[4] {
            "" => None,
            "true" => Some(true),
            "false" => Some(false),
            other => return Err(bad(format!("label {other:?} must be empty, true or false"))),
        };
        let reformulation = if extended && !record[5].is_empty() {
            Some(record[5].parse::<Reformulation>().map_err(bad)?)
        } else {
            None
        };
        if record[0].is_empty() || record[1].is_empty() {
            return Err(bad("empty topic or query id".into()));
        }
        rows.push(LeakageCandidate {
            topic_id: record[0].to_string(),
            query_id: record[1].to_string(),
            field,
            similarity,
            label,
            reformulation,
        });
    }
    Ok(rows)
}

pub fn parse_sheet(path: &Path) -> Result<Vec<LeakageCandidate>> {
    read_sheet(open(path)?)
}

/// CSV bytes for `rows`. The `reformulation` column is emitted only when
/// at least one row carries a type.
pub fn sheet_to_csv(rows: &[LeakageCandidate]) -> Vec<u8> {
    let extended = rows.iter().any(|r| r.reformulation.is_some());
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = BASE_HEADER.to_vec();
    if extended {
        header.push("reformulation");
    }
    wtr.write_record(&header).expect("write to Vec");
    for r in rows {
        let field = r.field.to_string();
        let sim = r.similarity.to_string();
        let label = match r.label {
            None => "",
            Some(true) => "true",
            Some(false) => "false",
        };
        let mut rec = vec![r.topic_id.as_str(), r.query_id.as_str(), &field, &sim, label];
        if extended {
            rec.push(r.reformulation.map_or("", Reformulation::as_str));
        }
        wtr.write_record(&rec).expect("write to Vec");
    }
    wtr.into_inner().expect("flush to Vec")
}
