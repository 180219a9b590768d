use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown distribution `{0}`")]
    UnknownDistribution(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    /// A moment above the stored maximum order was requested.
    #[error("moment of order {order} unavailable (stored up to order {max})")]
    MomentUnavailable { order: usize, max: usize },

    #[error("measurement noise raised to power {0} cannot be reduced")]
    NoisePower(u32),

    #[error("state-variable cap of {cap} exceeded ({reached} variables discovered)")]
    CapExceeded { cap: usize, reached: usize },

    #[error("variable {0} required by an output is not a state of the model")]
    UnseededVariable(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("recursion diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("model is unstable at beta = {beta} (spectral radius {rho})")]
    Unstable { beta: f64, rho: f64 },

    #[error("spectral radius did not converge after {iterations} iterations (bracket [{lo}, {hi}])")]
    NoConvergence { iterations: usize, lo: f64, hi: f64 },

    #[error("no stability crossing in [{lo}, {hi}] (rho = {rho_lo} .. {rho_hi})")]
    NoCrossing {
        lo: f64,
        hi: f64,
        rho_lo: f64,
        rho_hi: f64,
    },

    #[error("invalid trial plan: {0}")]
    InvalidPlan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
