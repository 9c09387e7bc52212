use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {d} outside the supported range 1..={cap}")]
    DimensionOutOfRange { d: u32, cap: u32 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid sign vector: entry {index} is {value}, expected -1 or +1")]
    InvalidSign { index: usize, value: i64 },

    #[error("packing construction stalled at {achieved} of {target} members (retry budget {retries} per slot)")]
    ConstructionFailure {
        achieved: usize,
        target: usize,
        retries: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },

    #[error("oracle budget of {budget} queries exhausted")]
    BudgetExhausted { budget: usize },

    #[error("points {first} and {second} are only {distance} apart in L1 (need > {required})")]
    SeparationViolation {
        first: usize,
        second: usize,
        distance: f64,
        required: f64,
    },

    #[error("instances do not share hardness parameters")]
    ParameterMismatch,

    #[error("candidates {first} and {second} both pass the Ψ/3 threshold")]
    BrokenInvariant { first: usize, second: usize },

    #[error("transcript round {round} carries no coin record")]
    MissingCoinView { round: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("enumeration of {work} states exceeds the limit of {limit}")]
    WorkLimit { work: u128, limit: u128 },

    #[error("instance with explicit depth vector cannot be serialized")]
    NotSerializable,

    #[error("missing run manifest in {0}")]
    MissingManifest(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
