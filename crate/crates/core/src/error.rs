use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument or configuration value was violated.
    #[error("invalid input: {0}")]
    Contract(String),

    /// The stochastic integration produced a non-finite amplitude.
    #[error("integration blow-up at step {step}{}: {detail}", trajectory_suffix(.trajectory_id))]
    BlowUp {
        step: u64,
        trajectory_id: Option<u64>,
        detail: String,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn trajectory_suffix(id: &Option<u64>) -> String {
    match id {
        Some(id) => format!(" (trajectory {id})"),
        None => String::new(),
    }
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a trajectory id to a blow-up error; other variants pass through.
    pub fn with_trajectory(self, id: u64) -> Self {
        match self {
            Error::BlowUp { step, detail, .. } => Error::BlowUp {
                step,
                trajectory_id: Some(id),
                detail,
            },
            other => other,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) => 2,
            Error::BlowUp { .. } => 3,
            Error::Format { .. } | Error::MissingInput(_) | Error::Io { .. } => 4,
        }
    }
}
