use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A documented precondition or invariant was broken by the caller or by
    /// inconsistent configuration.
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("replay memory holds no usable fragment")]
    EmptyStore,
    #[error("configuration error: {0}")]
    Config(String),
    /// More consecutive over-maximum delays than the action buffer can absorb.
    #[error("delay overflow: {0}")]
    Overflow(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
