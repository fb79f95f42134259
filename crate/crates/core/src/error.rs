use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum L2eError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),
}

pub type Result<T> = std::result::Result<T, L2eError>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(L2eError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
