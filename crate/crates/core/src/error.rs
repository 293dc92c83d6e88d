use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid category: {0}")]
    Category(String),

    #[error("undeclared atom '{atom}' in category {category}")]
    UndeclaredAtom { atom: String, category: String },

    #[error("line {line}: {message}")]
    GrammarSyntax { line: usize, message: String },

    #[error("grammar validation failed: {0}")]
    GrammarValidation(String),

    #[error("unknown word '{0}'")]
    UnknownWord(String),

    #[error("no parse for '{sentence}' within {reanalyses} reanalyses")]
    HardCap { sentence: String, reanalyses: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for bad data or failed validation, 3 for
    /// internal faults. Usage errors (1) are raised by the argument parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
