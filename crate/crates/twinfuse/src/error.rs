use std::io;
use std::path::{Path, PathBuf};

use crate::pgm::PgmError;
use crate::wav::WavError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Wav { path: PathBuf, source: WavError },
    #[error("{}: {source}", path.display())]
    Pgm { path: PathBuf, source: PgmError },
    #[error("{}: line {line}: {reason}", path.display())]
    Table {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}: {reason}", path.display())]
    Manifest { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dataset failed validation: {0}")]
    Dataset(String),
    #[error(transparent)]
    Core(#[from] twinfuse_core::Error),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn table(path: &Path, line: usize, reason: impl Into<String>) -> Self {
        Error::Table {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }

    /// Process exit status: 2 for broken internal invariants, 1 for
    /// everything caused by configuration or data.
    pub fn exit_code(&self) -> i32 {
        use twinfuse_core::Error as E;
        match self {
            Error::Invariant(_) => 2,
            Error::Core(E::AlreadyNormalized | E::NotNormalized | E::ScoreMismatch(_)) => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

/// Attaches a pipeline stage name to errors.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::Invariant("x".into()).exit_code(), 2);
        let r: std::result::Result<(), twinfuse_core::Error> = Err(twinfuse_core::Error::NotNormalized);
        let e = r.stage("fuse").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(e.to_string(), "fuse: score matrix is not normalized");
    }
}
