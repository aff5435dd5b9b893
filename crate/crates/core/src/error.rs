use std::io;

/// Errors produced by dataset handling, transforms, and the cluster simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("domain size {0} is not a power of two (at least 2)")]
    DomainNotPowerOfTwo(u32),

    #[error("key {key} out of range [1, {u}]")]
    KeyOutOfRange { key: u32, u: u32 },

    #[error("duplicate key {0} in sparse input")]
    DuplicateKey(u32),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("bad dataset file: {0}")]
    BadFormat(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("protocol violation: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;
