use thiserror::Error;

/// Errors raised across the library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("point ({t}, {x}) lies outside the declared smoothness domain")]
    Domain { t: f64, x: f64 },
    #[error("derivative order ({i},{j}) of the {which} coefficient is not available")]
    Capability {
        which: &'static str,
        i: usize,
        j: usize,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("method exceeded the evaluation cap of {cap}")]
    Divergence { cap: usize },
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn argument<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Argument(msg.into()))
}
