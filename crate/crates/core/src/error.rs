use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("node index {index} out of range for a network of {n_agents} agents")]
    IndexOutOfRange { index: usize, n_agents: usize },

    #[error("graph is disconnected: nodes {unreachable:?} unreachable from node 0")]
    Disconnected { unreachable: Vec<usize> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is rank deficient (singular values {singular_values:?})")]
    RankDeficient { singular_values: Vec<f64> },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("unstable recursion: spectral radius {spectral_radius} >= 1")]
    Unstable { spectral_radius: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("all {n_runs} Monte Carlo runs diverged")]
    AllRunsDiverged { n_runs: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::Disconnected { .. } => "disconnected",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::Unstable { .. } => "unstable",
            Error::NotConverged { .. } => "not_converged",
            Error::Unsupported(_) => "unsupported",
            Error::AllRunsDiverged { .. } => "all_runs_diverged",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
