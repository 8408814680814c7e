use thiserror::Error;

/// Errors raised by the signature library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),
    #[error("maps are not composable along axis {axis}: {detail}")]
    NotComposable { axis: usize, detail: String },
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
    #[error("budget exceeded: {required} terms requested, budget is {budget}")]
    BudgetExceeded { required: f64, budget: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
