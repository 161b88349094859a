use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("hypothesis violated ({condition}): {detail}")]
    Hypothesis {
        condition: &'static str,
        detail: String,
    },

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("step budget exceeded: needed {needed} matrix products (budget {budget}), achievable error bound {bound:e}")]
    StepBudget {
        needed: usize,
        budget: usize,
        bound: f64,
    },

    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
