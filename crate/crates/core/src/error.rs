use thiserror::Error;

use crate::net::PartyId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("backend mismatch: expected {expected}, got {actual}")]
    BackendMismatch { expected: String, actual: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("malformed encoding: {0}")]
    Malformed(String),

    #[error("nothing to merge")]
    EmptyMerge,

    #[error("ciphertext is not invertible")]
    NotInvertible,

    #[error("protocol order violated: {0}")]
    ProtocolOrder(String),

    #[error("round incomplete: {0}")]
    IncompleteRound(String),

    #[error("unknown receiver {0}")]
    Routing(PartyId),

    #[error("not authorized: {0}")]
    Unauthorized(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

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
        Error::Malformed(e.to_string())
    }
}
