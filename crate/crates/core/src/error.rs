use thiserror::Error;

/// Errors raised across the estimation, optimization and recovery stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("degree order violated: k = {k} > l = {l}")]
    DegreeOrder { k: u32, l: u32 },
    #[error("degree overflow: need degree {needed}, dictionary holds {available}")]
    DegreeOverflow { needed: u32, available: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("orbit escaped the domain box at step {step}")]
    OrbitEscaped { step: usize },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("state blew up beyond the abort radius at step {step}")]
    BlowUp { step: usize },
    #[error("no section crossings found")]
    NoCrossings,
    #[error("newton iteration diverged (residual {residual:e})")]
    NewtonDiverged { residual: f64 },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("reference moment matrix is singular")]
    SingularReference,
    #[error("operation requires a one-dimensional measure, got n = {0}")]
    DimensionNotOne(usize),
    #[error("atom extraction failed: {0}")]
    ExtractionFailed(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
