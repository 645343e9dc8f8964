use std::path::{Path, PathBuf};

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] walab_core::Error),
}

impl HarnessError {
    pub fn usage(msg: impl Into<String>) -> Self {
        HarnessError::Usage(msg.into())
    }

    pub fn format(path: impl AsRef<Path>, reason: impl Into<String>) -> Self {
        HarnessError::Format {
            path: path.as_ref().to_path_buf(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        use walab_core::Error as E;
        match self {
            HarnessError::Usage(_) | HarnessError::Core(E::Spec(_)) => exit::USAGE,
            HarnessError::Core(E::Numeric { .. }) => exit::NUMERIC,
            _ => exit::DATA,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        use walab_core::Error as E;
        match self {
            HarnessError::Usage(_) => "usage",
            HarnessError::Format { .. } => "format",
            HarnessError::Io { .. } => "io",
            HarnessError::Core(e) => match e {
                E::Layout { .. } => "layout",
                E::Numeric { .. } => "numeric",
                E::Spec(_) => "spec",
                E::Format { .. } => "format",
                E::Range { .. } => "range",
                E::Io(_) => "io",
            },
        }
    }
}
