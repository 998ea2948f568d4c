use std::fmt;

use thiserror::Error;

/// Pipeline stage, used to tag errors that escape a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Train,
    Prune,
    Cluster,
    Extract,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Load => "load",
            Stage::Train => "train",
            Stage::Prune => "prune",
            Stage::Cluster => "cluster",
            Stage::Extract => "extract",
            Stage::Evaluate => "evaluate",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("no patterns")]
    Empty,

    #[error("split requests {requested} patterns but dataset has {available}")]
    SplitTooLarge { requested: usize, available: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: objective is {value}")]
    Diverged { epoch: usize, value: f64 },

    #[error("network degenerate: no hidden node has both input and output connections")]
    DegenerateNetwork,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Carries its cause in the message rather than as a source, so
    /// error chains print it once.
    #[error("{stage} stage failed: {cause}")]
    Stage { stage: Stage, cause: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                cause: Box::new(e),
            },
        }
    }

    /// True for errors caused by malformed or inconsistent input data.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Schema(_) | Error::Row { .. } | Error::Empty | Error::SplitTooLarge { .. } => {
                true
            }
            Error::Stage { stage, cause } => *stage == Stage::Load || cause.is_data_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}
