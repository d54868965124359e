use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no steady state: all transition rates are zero")]
    NoSteadyState,

    #[error("inconsistent data: {0}")]
    InconsistentData(String),

    #[error("invalid rate matrix: {0}")]
    InvalidGenerator(String),

    #[error("steady state is not unique, closed classes: {classes:?}")]
    MultipleSteadyStates { classes: Vec<Vec<String>> },

    #[error("no finite spin temperature for p1 = {0} (p1 >= 0.75)")]
    NoFiniteTemperature(f64),

    #[error("detection model is not invertible (eta_dark_given_down <= eta_dark_given_up)")]
    NonInvertible,

    #[error("fit did not converge after {iterations} iterations (last parameters {last:?})")]
    NonConvergence { iterations: usize, last: Vec<f64> },

    #[error("degenerate fit: parameter combination {combination} is not identifiable")]
    Degenerate { combination: String },

    #[error("bootstrap unstable: {failed} of {total} resampled fits failed")]
    UnstableBootstrap { failed: usize, total: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
