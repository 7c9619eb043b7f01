use thiserror::Error;

/// Failure modes shared by every layer of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForgeError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value at grid node {node} (x = {x})")]
    Evaluation { node: usize, x: f64 },

    #[error("degenerate coefficient: {0}")]
    Degeneracy(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("derivative order {0} exceeds the regularity budget of 11")]
    Regularity(usize),

    #[error("unknown preset `{name}` (available: {available})")]
    UnknownPreset { name: String, available: String },

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("harness error: {0}")]
    Harness(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ForgeError {
    fn from(e: std::io::Error) -> Self {
        ForgeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ForgeError>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(ForgeError::Argument(msg.into()))
}
