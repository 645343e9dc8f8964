use std::path::PathBuf;

use crate::ndcore::LayoutId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("layout mismatch: expected {expected} ({expected_len} values), found {found} ({found_len} values)")]
    Layout {
        expected: LayoutId,
        expected_len: usize,
        found: LayoutId,
        found_len: usize,
    },

    #[error("non-finite value{}: {detail}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numeric {
        iteration: Option<u64>,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    Spec(String),

    #[error("{}: malformed data at byte offset {offset}: {reason}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{what} {index} out of range (limit {limit})")]
    Range {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numeric(detail: impl Into<String>) -> Self {
        Error::Numeric {
            iteration: None,
            detail: detail.into(),
        }
    }

    pub(crate) fn spec(detail: impl Into<String>) -> Self {
        Error::Spec(detail.into())
    }

    /// Attach the optimizer iteration to a numeric error; other kinds pass through.
    pub fn at_iteration(self, it: u64) -> Self {
        match self {
            Error::Numeric { iteration: None, detail } => Error::Numeric {
                iteration: Some(it),
                detail,
            },
            other => other,
        }
    }
}
