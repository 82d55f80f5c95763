use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("search space has {size} configurations, exceeding the cap of {cap}")]
    SearchTooLarge { size: String, cap: u64 },

    #[error("dataset payload of {needed} bytes exceeds the cap of {cap} bytes")]
    Overflow { needed: u128, cap: u64 },

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
