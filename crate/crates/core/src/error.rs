use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {dim} outside supported range 1..={max}: the number of partitions grows as the Bell number B({dim})")]
    DimensionOutOfRange { dim: usize, max: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("evaluation grid does not cover the data hull inflated by the kernel support on axis {axis}")]
    GridCoverage { axis: usize },

    #[error("grid mismatch between estimators")]
    GridMismatch,

    #[error("block table too large: {nodes} nodes exceeds the limit of {limit}")]
    TableTooLarge { nodes: usize, limit: usize },

    #[error("empty candidate set: no dyadic bandwidth satisfies n·V_h >= ln(n)/a* (a* = {a_star:e}); use calibrated mode or a larger a*")]
    EmptyCandidates { a_star: f64 },

    #[error("supremum search did not converge: {0}")]
    NonConvergence(String),

    #[error("quadrature did not reach tolerance {target:e} (achieved {achieved:e})")]
    Quadrature { target: f64, achieved: f64 },

    #[error("rejection sampler efficiency {efficiency:.4} below 1%; reduce the bump amplitude")]
    SamplerEfficiency { efficiency: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
