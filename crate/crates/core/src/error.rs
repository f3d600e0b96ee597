use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument lies outside the domain of the requested operation
    /// (invalid natural parameters, non-binary inputs, family mismatch, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested configuration is inconsistent (K > N, M > D, bad α, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Estimation is impossible on the given data (empty data set, singular
    /// sample covariance, rank-deficient inputs).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A numerical failure at runtime (zero total density, overflow).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A mixture component lost essentially all responsibility.
    #[error("component {index} collapsed (total responsibility {responsibility:.3e})")]
    ComponentCollapse { index: usize, responsibility: f64 },

    /// An iteration failed to reach its tolerance within the iteration cap.
    #[error("no convergence within {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    /// The problem exceeds the size cap of an exact-enumeration oracle.
    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    /// A gradient callback returned NaN; carries the offending iterate.
    #[error("NaN gradient at iteration {iter}; iterate {iterate:?}")]
    NanGradient { iter: usize, iterate: Vec<f64> },
}
