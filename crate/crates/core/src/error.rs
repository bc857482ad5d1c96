use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data, rejected with enough context to locate it.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("protocol error (request {id:?}): {message}")]
    Protocol { id: Option<u64>, message: String },

    #[error("backend unreachable: {0}")]
    Connection(String),

    #[error("backend timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub fn protocol(id: Option<u64>, message: impl Into<String>) -> Self {
        Error::Protocol {
            id,
            message: message.into(),
        }
    }

    /// Attaches a file path to an error raised while reading that file.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 validation, 2 backend/protocol, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::Json(_) => 1,
            Error::Protocol { .. } | Error::Connection(_) | Error::Timeout(_) => 2,
            Error::Io(_) => 3,
            Error::File { source, .. } => source.exit_code(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::validation("x").exit_code(), 1);
        assert_eq!(Error::protocol(Some(3), "x").exit_code(), 2);
        let io = Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "gone"));
        assert_eq!(io.in_file("a.txt").exit_code(), 3);
        assert_eq!(Error::parse(2, "bad").in_file("b").exit_code(), 1);
    }
}
