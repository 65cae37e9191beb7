use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("modulus must be positive")]
    ZeroModulus,
    #[error("{value} is not invertible modulo {modulus}")]
    NotInvertible { value: u64, modulus: u64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no square root exists: {0}")]
    NoSquareRoot(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("moduli {0} and {1} are not coprime")]
    NotCoprime(u64, u64),
    #[error("{d} does not divide {q}")]
    NotDivisor { d: u64, q: u64 },
    #[error("pole: u + b_{index} vanishes modulo {p}")]
    PoleAtU { index: usize, p: u64 },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("internal consistency failure: {0}")]
    Internal(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
