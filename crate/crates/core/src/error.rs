use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("population cap of {cap} exceeded at generation {generation} (size {size})")]
    PopulationCap {
        cap: u64,
        generation: u32,
        size: u64,
    },

    #[error("grid cell cap of {cap} exceeded (requested {requested} cells)")]
    CellCap { cap: usize, requested: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
