use alloc::string::String;

/// Errors raised by the numerical routines.
///
/// Non-convergence of the solver is not an error; it is reported through
/// [`crate::OnsagerState::converged`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("kernel failed validation: {0}")]
    KernelValidation(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
