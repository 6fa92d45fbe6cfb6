use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{for_each_line, open, Source};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstanceSource {
    #[serde(rename = "MSM")]
    Msm,
    #[serde(rename = "ORCAS")]
    Orcas,
    #[serde(rename = "TEST")]
    Test,
}

impl InstanceSource {
    /// Training sources only come from the two query logs; `OTHER` has no mapping.
    pub fn from_query_source(s: Source) -> Option<Self> {
        match s {
            Source::Msm => Some(InstanceSource::Msm),
            Source::Orcas => Some(InstanceSource::Orcas),
            Source::Other => None,
        }
    }
}

/// One training query with one relevant and one non-relevant document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub query_id: String,
    pub query_text: String,
    pub pos_doc_id: String,
    pub neg_doc_id: String,
    pub source: InstanceSource,
    pub leaked: bool,
    pub leak_topic_id: Option<String>,
}

impl TrainingInstance {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.pos_doc_id == self.neg_doc_id {
            return Err(format!(
                "query {:?}: positive and negative document are both {:?}",
                self.query_id, self.pos_doc_id
            ));
        }
        if self.leaked && self.leak_topic_id.is_none() {
            return Err(format!("query {:?}: leaked without leak_topic_id", self.query_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainingSet {
    pub instances: Vec<TrainingInstance>,
}

impl TrainingSet {
    /// Query-document pairs: each record holds one positive and one negative.
    pub fn pair_count(&self) -> usize {
        2 * self.instances.len()
    }

    pub fn leaked_records(&self) -> impl Iterator<Item = &TrainingInstance> {
        self.instances.iter().filter(|i| i.leaked)
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.instances.len() * 128);
        for inst in &self.instances {
            serde_json::to_writer(&mut out, inst).expect("instance serializes");
            out.push(b'\n');
        }
        out
    }
}

pub fn read_training_set<R: BufRead>(reader: R) -> Result<TrainingSet> {
    let mut instances = Vec::new();
    for_each_line(reader, "training set", |line_no, line| {
        let inst: TrainingInstance =
            serde_json::from_str(line).map_err(|e| Error::parse("training set", line_no, e.to_string()))?;
        inst.validate()
            .map_err(|msg| Error::parse("training set", line_no, msg))?;
        instances.push(inst);
        Ok(())
    })?;
    Ok(TrainingSet { instances })
}

pub fn parse_training_set(path: &Path) -> Result<TrainingSet> {
    read_training_set(open(path)?)
}
