use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure surfaced by the library. Messages are prefixed with the
/// module that raised them so the CLI can report them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus-io: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus-io: {what} line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error("corpus-io: {what} line {line}: duplicate id {id:?}")]
    Duplicate {
        what: &'static str,
        line: usize,
        id: String,
    },

    #[error("corpus-io: embedding matrix has bad magic bytes {found:?} (expected \"EMB1\")")]
    BadMagic { found: [u8; 4] },

    #[error("corpus-io: embedding matrix payload truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("corpus-io: embedding matrix has {extra} trailing bytes after the declared payload")]
    TrailingBytes { extra: u64 },

    #[error("corpus-io: embedding matrix has {matrix} rows but ids file has {ids} lines")]
    CountMismatch { matrix: u64, ids: u64 },

    #[error("embed-index: row {id:?} has zero norm")]
    ZeroRow { id: String },

    #[error("embed-index: dimension mismatch: matrix has dim {expected}, probe has dim {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("leakage-id: no threshold reaches precision {target}; best achievable is {best}")]
    PrecisionUnreachable { target: f64, best: f64 },

    #[error("{module}: {msg}")]
    Invalid { module: &'static str, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: &'static str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            what,
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            module,
            msg: msg.into(),
        }
    }
}
