use std::fmt;

/// Errors reported by graph sampling, sketching, decoding and checking
/// routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is out of its documented range (zero sizes, degree
    /// larger than the row count, scale mismatches, ...).
    Parameter(String),
    /// An exact enumeration would visit more cases than the caller's
    /// work budget allows.
    BudgetExceeded { required: u128, budget: u128 },
    /// Two objects that must refer to the same matrix do not.
    ProvenanceMismatch { expected: u64, found: u64 },
    /// Dimensions of two objects do not line up.
    Dimension(String),
    /// A guarantee evaluation was requested outside the regime where the
    /// bound is defined (e.g. an expansion defect too large).
    BoundUndefined(String),
    /// An iterative numerical routine failed to make progress
    /// (divergence or stagnation outside its contract).
    Numeric(String),
    /// Malformed input file or serialization problem.
    Format(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::BudgetExceeded { required, budget } => {
                write!(f, "work budget exceeded: {required} cases > budget {budget}")
            }
            Error::ProvenanceMismatch { expected, found } => write!(
                f,
                "sketch/matrix provenance mismatch: expected {expected:#018x}, found {found:#018x}"
            ),
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::BoundUndefined(msg) => write!(f, "bound undefined: {msg}"),
            Error::Numeric(msg) => write!(f, "numerical failure: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

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

pub type Result<T> = std::result::Result<T, Error>;
