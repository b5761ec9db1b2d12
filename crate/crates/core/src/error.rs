use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("state matrix is not unitary (deviation {deviation:.3e}); renormalize first")]
    NotUnitary { deviation: f64 },

    #[error("state matrix is numerically singular (condition estimate {condition:.3e}); time step too large")]
    Singular { condition: f64 },

    #[error("occupation {value} at site {site} is outside [0, 1]")]
    OccupationOutOfRange { site: usize, value: f64 },

    #[error("correlation matrix is corrupted: {0}")]
    CorruptedCorrelations(String),

    #[error("invalid subsystem [{start}, {start}+{len}) for a chain of {sites} sites")]
    InvalidSubsystem {
        start: usize,
        len: usize,
        sites: usize,
    },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory {index} (seed {seed}) failed: {source}")]
    Trajectory {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("stepper was built for different model parameters")]
    ConfigMismatch,

    #[error("{0}")]
    Statistics(String),

    #[error("{0}")]
    Fit(String),

    #[error("no crossing of the zero threshold in the supplied data")]
    NoCrossing,

    #[error("dense oracle limited to {max} sites, got {sites}")]
    OracleTooLarge { sites: usize, max: usize },

    #[error("integration became unstable at t = {time}")]
    Unstable { time: f64 },

    #[error("spec parse error at line {line}, column {column}: {message}")]
    SpecParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("{0}")]
    Input(String),

    #[error("{failed} of {total} jobs failed; see the manifest for the failing seeds")]
    JobsFailed { failed: usize, total: usize },

    #[error("oracle deviations exceed tolerance: {0}")]
    OracleMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. } | Error::SpecParse { .. } | Error::Input(_)
        )
    }
}
