use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid has {nodes} nodes, exceeding the budget of {budget}")]
    GridBudget { nodes: u128, budget: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("fields are defined on different grids")]
    GridMismatch,

    #[error("invalid sample set: {0}")]
    InvalidSamples(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("integration domain box [-{n}, {n}] is smaller than the grid extent {extent}")]
    DomainTooSmall { n: f64, extent: f64 },

    #[error("model `{0}` has no sampler for this operation")]
    NoSampler(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
