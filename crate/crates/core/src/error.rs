use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("step size underflow at t = {t} (h = {h:e}); system too stiff for the explicit integrator")]
    Stiffness { t: f64, h: f64 },

    #[error("non-finite right-hand side evaluation at t = {t}")]
    Evaluation { t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown system `{0}`")]
    Registry(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("orbit left the region at t = {exit_time} (state {state:?})")]
    Containment { exit_time: f64, state: Vec<f64> },

    #[error("criterion not applicable: {0}")]
    NotApplicable(String),

    #[error("structure error: {0}")]
    Structure(String),

    #[error("log-norm hypothesis violated: sup mu = {sup_mu} >= 0 at witness {witness:?}")]
    HypothesisViolated { sup_mu: f64, witness: Vec<f64> },

    #[error("pseudosolution not admissible: {0}")]
    Admissibility(String),

    #[error("no convergence after {iterations} iterations (last step {last_step:e}, last ratio {last_ratio})")]
    NonConvergence {
        iterations: usize,
        last_step: f64,
        last_ratio: f64,
    },

    #[error("hypothesis check failed: {0}")]
    HypothesisCheck(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
