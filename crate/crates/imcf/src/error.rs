use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the warp interval or the range of a monotone map.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid user input (mesh parameters, config files, incompatible data).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical routine failed to meet its contract (bracket, tolerance, eigen input).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The mean-curvature denominator n*lambda' - sigma~^{ij} phi_{i,j} became nonpositive.
    #[error("singularity: nonpositive flow denominator {denom:.6e} at node {node} (t = {t:.6})")]
    Singularity { node: usize, denom: f64, t: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
