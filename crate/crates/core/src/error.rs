use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate cell {cell}: row has no positive mass (sum of positive parts = {positive_sum})")]
    DegenerateCell { cell: usize, positive_sum: f64 },

    #[error("degenerate composition c = {c:?}: constrained system condition number {condition:e} exceeds 1e14")]
    DegenerateComposition { c: Vec<f64>, condition: f64 },

    #[error("face {face}: {source}")]
    AtFace {
        face: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stability failure: simplex repair magnitude {magnitude:e} exceeds 1e-6; reduce cfl")]
    StabilityFailure { magnitude: f64 },

    #[error("step {step} (t = {time}): {source}")]
    AtStep {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("sample spacing {spacing} is too coarse for mollification radius {epsilon} (need spacing <= epsilon/4)")]
    Resolution { spacing: f64, epsilon: f64 },

    #[error("renormalization `{name}` is not admissible: {reason}")]
    Inadmissible { name: String, reason: String },

    #[error("line {line}: key `{key}`: {message}")]
    Parse {
        line: usize,
        key: String,
        message: String,
    },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    /// True if this error (or the error it wraps) is a time-step stability failure.
    pub fn is_stability_failure(&self) -> bool {
        match self {
            Error::StabilityFailure { .. } => true,
            Error::AtStep { source, .. } | Error::AtFace { source, .. } => source.is_stability_failure(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
