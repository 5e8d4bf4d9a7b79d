use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the estimation core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid hyperparameters or construction arguments.
    Config(String),
    /// Operand shapes do not line up.
    Dimension {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A caller broke an API contract (e.g. backward from a non-scalar node).
    Contract(String),
    /// A NaN/Inf or other numeric breakdown.
    Numeric(String),
    /// An argument lies outside the domain of a function (simplex boundary, zero ratio, ...).
    Domain(String),
    /// Minibatch too small for the requested loss.
    Batch { needed: usize, found: usize },
    /// Exact enumeration would exceed the term budget.
    Budget { terms: u128, limit: u128 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Dimension { op, expected, found } => write!(
                f,
                "dimension error in {op}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Batch { needed, found } => {
                write!(f, "batch error: need at least {needed} rows, got {found}")
            }
            Error::Budget { terms, limit } => write!(
                f,
                "enumeration budget exceeded: {terms} terms (limit {limit})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
