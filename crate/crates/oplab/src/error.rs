use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("element {mask:#x} lies outside D_{depth}")]
    OutOfGroup { mask: u64, depth: u32 },

    #[error("depth {depth} exceeds the limit {limit}")]
    DepthLimit { depth: u32, limit: u32 },

    #[error("{what} undefined at resolution {resolution}")]
    Undefined { what: &'static str, resolution: u32 },

    #[error("resolution escape: {0}")]
    ResolutionEscape(String),

    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),

    #[error("size limit: {0}")]
    Limit(String),

    #[error("depth mismatch: {0} vs {1}")]
    DepthMismatch(u32, u32),

    #[error("alphabet mismatch: {0} vs {1}")]
    AlphabetMismatch(usize, usize),

    #[error("no sample accepted after {attempts} attempts")]
    NoSamples { attempts: u64 },

    #[error("inconsistent level structure: {0}")]
    Eigen(String),

    #[error("invalid parameter: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
