use std::path::PathBuf;

/// Errors produced by model construction, bound evaluation and simulation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("chain not ergodic: {0}")]
    NotErgodic(String),

    /// One of the standing assumptions (step size, positive stationary
    /// distribution, bounded rewards, bounded initial iterate) does not hold.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size {alpha} exceeds the admissible threshold {threshold}")]
    StepSizeTooLarge { alpha: f64, threshold: f64 },

    /// The moment recursion left the PSD cone beyond tolerance. This points at
    /// an engine bug, not at bad input data.
    #[error("numerical failure at step {step}: {detail}")]
    Numerical { step: usize, detail: String },

    /// A simulated iterate left the deterministic sup-norm envelope.
    #[error("iterate bound violated in run {run} at step {step}: |V|_inf = {norm} > {bound}")]
    IterateBound {
        run: usize,
        step: usize,
        norm: f64,
        bound: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
