use thiserror::Error;

/// Errors raised by the analysis modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("singular block: {0}")]
    SingularBlock(String),
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("invalid node-set pair: {0}")]
    InvalidPair(String),
    #[error("Laplacian is not PSD with a single zero eigenvalue")]
    NotPsdOneZero,
    #[error("graph has {n} nodes, exhaustive enumeration is limited to {max}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("Newton iteration did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    NoConvergence { iterations: usize, mismatch: f64 },
    #[error("reduced power-flow Jacobian is singular")]
    SingularJacobian,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("interior-point breakdown: {0}")]
    NumericalFailure(String),
    #[error("rank-one recovery failed (eigenvalue ratio {0:.3e})")]
    RankRecoveryFailed(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
