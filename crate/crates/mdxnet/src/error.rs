use std::io;
use std::path::PathBuf;

use mdxnet_core::Error as CoreError;

use crate::checkpoint::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum MdxError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error("{}: {source}", path.display())]
    Wav { path: PathBuf, source: hound::Error },
}

impl MdxError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        MdxError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        MdxError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// 2 for contract and configuration errors, 3 for I/O and file-format errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            MdxError::Core(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, MdxError>;
