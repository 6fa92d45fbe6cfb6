//! Readers and writers for every on-disk format the auditor touches.
//!
//! Parsers validate and reject; they never repair input. Errors carry the
//! 1-based line number of the offending record.

mod embeddings;
mod qrels;
mod queries;
mod rescore;
mod run;
mod sheet;
mod topics;
mod training;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use embeddings::{read_embeddings, write_embeddings, EmbeddingMatrix, EMB_MAGIC};
pub use qrels::{parse_qrels, read_qrels, Qrels};
pub use queries::{parse_queries, read_queries, Query, QueryCollection, QueryFormat, Source};
pub use rescore::{parse_rescore, read_rescore, RescoreTable};
pub use run::{parse_run, read_run, Run, RunEntry};
pub use sheet::{parse_sheet, read_sheet, sheet_to_csv, Reformulation, LeakageCandidate, TopicField};
pub use topics::{parse_topics, read_topics, Topic, TopicSet};
pub use training::{parse_training_set, read_training_set, InstanceSource, TrainingInstance, TrainingSet};

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Calls `f(line_no, line)` for each `\n`-terminated line, without the
/// terminator. A final line without a newline is still delivered.
pub(crate) fn for_each_line<R: BufRead>(
    mut reader: R,
    what: &'static str,
    mut f: impl FnMut(usize, &str) -> Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(format!("<{what}>"), e))?;
        if n == 0 {
            return Ok(());
        }
        line_no += 1;
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        let line = std::str::from_utf8(&buf)
            .map_err(|e| Error::parse(what, line_no, format!("invalid UTF-8: {e}")))?;
        f(line_no, line)?;
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Lowercase hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut reader = open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut reader, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(hasher.finalize()))
}
