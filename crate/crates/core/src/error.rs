use std::path::PathBuf;

use crate::doc_model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid JSON at `{field}`: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("page `{page_id}` failed validation: {}", format_violations(.violations))]
    InvalidPage {
        page_id: String,
        violations: Vec<Violation>,
    },

    #[error("unknown token id {id} at position {position}")]
    UnknownToken { position: usize, id: u32 },

    #[error("text piece {piece:?} is not in the tokenizer vocabulary")]
    UnknownPiece { piece: String },

    #[error("span {span_id} has no gold label")]
    MissingGoldLabel { span_id: i64 },

    #[error("cannot vote on an empty list of token labels")]
    EmptyVote,

    #[error("span {span_id} has no token predictions")]
    NoTokenPredictions { span_id: i64 },

    #[error("prediction and gold label sets cover different ids: {0}")]
    IdMismatch(String),

    #[error("pool index {0} is not in the span pool")]
    NotInPool(usize),

    #[error("page `{page_id}` has no reference markdown")]
    MissingReference { page_id: String },

    #[error("lossless check failed on page `{page_id}` for method {method}: assisted output differs from greedy at token {position}")]
    LosslessViolation {
        page_id: String,
        method: String,
        position: usize,
    },

    #[error("stats ledger does not balance on page `{page_id}` for method {method}")]
    LedgerImbalance { page_id: String, method: String },

    #[error("ablated cld diverged from mpld on page `{page_id}`")]
    AblationMismatch { page_id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that signal a broken decoding invariant rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::LosslessViolation { .. }
                | Error::AblationMismatch { .. }
                | Error::LedgerImbalance { .. }
        )
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
