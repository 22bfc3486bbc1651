use thiserror::Error;

use crate::params::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus bit length {0} outside 2..=127")]
    InvalidModulus(u32),

    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("modulus mismatch: 2^{0} vs 2^{1}")]
    ModulusMismatch(u32, u32),

    #[error("entry {value} is not a centered residue mod 2^{bits}")]
    NotCentered { value: i128, bits: u32 },

    #[error("fixed-point value does not fit modulus 2^{bits}")]
    EncodingOverflow { bits: u32 },

    #[error("invalid fixed-point format: k = {k}, l = {l}")]
    InvalidFixedPoint { k: u32, l: u32 },

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("invalid seed: {0}")]
    InvalidSeed(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("session mismatch: expected {expected}, got {got}")]
    SessionMismatch { expected: u64, got: u64 },

    #[error("timed out waiting for {0}")]
    Timeout(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// True for failures that originate in the message layer rather than in
    /// local computation.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            Error::Timeout(_) | Error::Transport(_) | Error::Io(_) | Error::SessionMismatch { .. }
        )
    }
}
