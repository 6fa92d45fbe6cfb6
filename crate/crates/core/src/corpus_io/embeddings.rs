//! `EMB1` dense matrix files.
//!
//! Layout: magic `EMB1`, `dim` as u32 LE, `count` as u64 LE, then
//! `count * dim` f32 LE values in row-major order. A companion UTF-8 file
//! names row `i` on line `i`.

use std::collections::HashSet;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{for_each_line, open};
use crate::error::{Error, Result};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: u64 = 16;

/// Row-major `f32` matrix with one unique id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("corpus-io", "embedding dim must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::invalid(
                "corpus-io",
                format!("{} values do not form {} rows of dim {dim}", data.len(), ids.len()),
            ));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if id.is_empty() || id.contains('\n') {
                return Err(Error::invalid("corpus-io", format!("invalid row id {id:?}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid("corpus-io", format!("duplicate row id {id:?}")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "corpus-io",
                format!("non-finite value in row {:?}", ids[pos / dim]),
            ));
        }
        Ok(EmbeddingMatrix { dim, ids, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    pub(crate) fn with_data(&self, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        EmbeddingMatrix {
            dim: self.dim,
            ids: self.ids.clone(),
            data,
        }
    }

    /// Encoded `EMB1` bytes (without the ids file).
    pub fn to_emb1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN as usize + self.data.len() * 4);
        out.extend_from_slice(EMB_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, matrix_path: &Path, ids_path: &Path) -> Result<()> {
    let io = |e| Error::io(matrix_path, e);
    let file = std::fs::File::create(matrix_path).map_err(io)?;
    let mut w = BufWriter::new(file);
    w.write_all(EMB_MAGIC).map_err(io)?;
    w.write_all(&(matrix.dim as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(matrix.count() as u64).to_le_bytes()).map_err(io)?;
    for v in &matrix.data {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let mut ids = String::with_capacity(matrix.ids.iter().map(|s| s.len() + 1).sum());
    for id in &matrix.ids {
        ids.push_str(id);
        ids.push('\n');
    }
    super::write_file(ids_path, ids.as_bytes())
}

/// Reads a matrix and its ids file. Zero-norm rows are rejected here so
/// every loaded matrix can be normalized.
pub fn read_embeddings(matrix_path: &Path, ids_path: &Path) -> Result<EmbeddingMatrix> {
    let io = |e| Error::io(matrix_path, e);
    let actual = std::fs::metadata(matrix_path).map_err(io)?.len();
    let mut reader = open(matrix_path)?;

    let mut header = [0u8; HEADER_LEN as usize];
    if actual < 4 {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual,
        });
    }
    reader.read_exact(&mut header[..4]).map_err(io)?;
    let magic: [u8; 4] = header[..4].try_into().unwrap();
    if &magic != EMB_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    if actual < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual,
        });
    }
    reader.read_exact(&mut header[4..]).map_err(io)?;
    let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as u64;
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::invalid("corpus-io", "embedding matrix header overflows"))?;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::TrailingBytes {
            extra: actual - expected,
        });
    }

    let ids = read_ids(ids_path)?;
    if ids.len() as u64 != count {
        return Err(Error::CountMismatch {
            matrix: count,
            ids: ids.len() as u64,
        });
    }

    let total = (count * dim) as usize;
    let mut data = Vec::with_capacity(total);
    let mut buf = vec![0u8; 1 << 16];
    while data.len() < total {
        let want = ((total - data.len()) * 4).min(buf.len());
        reader.read_exact(&mut buf[..want]).map_err(io)?;
        data.extend(
            buf[..want]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
        );
    }

    let matrix = EmbeddingMatrix::new(dim as usize, ids, data)?;
    for (id, row) in matrix.rows() {
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroRow { id: id.to_string() });
        }
    }
    Ok(matrix)
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for_each_line(open(path)?, "embedding ids", |line_no, line| {
        if line.is_empty() {
            return Err(Error::parse("embedding ids", line_no, "empty id"));
        }
        ids.push(line.to_string());
        Ok(())
    })?;
    Ok(ids)
}
