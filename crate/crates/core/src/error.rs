use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode register: {0}")]
    InvalidRegister(String),

    #[error("mode labels overlap: {0}")]
    OverlappingModes(String),

    #[error("unknown mode label `{0}`")]
    UnknownMode(String),

    #[error("register mismatch: {0}")]
    RegisterMismatch(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error(
        "coherent tail {tail:.3e} exceeds tolerance {tail_eps:.3e}; cutoff {required} is required (limit {limit})"
    )]
    TailUnattainable {
        tail: f64,
        tail_eps: f64,
        required: usize,
        limit: usize,
    },

    #[error("unphysical element: {0}")]
    Unphysical(String),

    #[error("operation requires a lossless beam splitter, got damping {gamma:.3e}")]
    NotLossless { gamma: f64 },

    #[error("{clicks} clicks requested but the mode cutoff is {cutoff}")]
    ClicksExceedCutoff { clicks: usize, cutoff: usize },

    #[error("input carries weight {weight:.3e} outside the retained photon-number blocks")]
    CutoffOverflow { weight: f64 },

    #[error("post-selected outcome is impossible (probability {probability:.3e})")]
    ImpossibleOutcome { probability: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
