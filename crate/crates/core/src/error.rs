use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A location index outside the region.
    InvalidLocation { index: u32, len: usize },
    /// A value violating a type invariant.
    Invalid(String),
    /// An operation precondition did not hold.
    Precondition(String),
    /// Exact computation refused because an enumeration cap was exceeded.
    CapExceeded { what: &'static str, size: f64, cap: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidLocation { index, len } => {
                write!(f, "location {index} out of range for region of {len} locations")
            }
            Error::Invalid(msg) => write!(f, "invalid value: {msg}"),
            Error::Precondition(msg) => write!(f, "precondition failed: {msg}"),
            Error::CapExceeded { what, size, cap } => {
                write!(f, "{what}: size {size} exceeds cap {cap}")
            }
        }
    }
}

impl core::error::Error for Error {}

macro_rules! invalid {
    ($($arg:tt)*) => { $crate::error::Error::Invalid(alloc::format!($($arg)*)) };
}
macro_rules! precondition {
    ($($arg:tt)*) => { $crate::error::Error::Precondition(alloc::format!($($arg)*)) };
}
pub(crate) use invalid;
pub(crate) use precondition;
