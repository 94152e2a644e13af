use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("not convergent: {reason} (last estimate {last_estimate:.6e})")]
    NonConvergent { reason: String, last_estimate: f64 },

    #[error("fiber solver failed at theta = {theta:.6}: {reason}")]
    SolverFailure { theta: f64, reason: String },

    #[error("potential not admissible: {0}")]
    Admissibility(String),

    #[error("trace not supported in gamma_1: max |f| on gamma_0 = {leak:.3e}, allowed {allowed:.3e}")]
    Support { leak: f64, allowed: f64 },

    #[error("theta grid of {m} points cannot resolve {cells} cells (need m > {cells})")]
    Alias { m: usize, cells: usize },

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular point |x'| = {norm:.3e} in Kelvin map")]
    SingularPoint { norm: f64 },

    #[error("point {0:?} lies outside the sampled source domain")]
    OutsideSource(Vec<f64>),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
