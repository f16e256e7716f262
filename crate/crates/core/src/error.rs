use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("improper density: the flat distribution has no normalized density")]
    ImproperDensity,

    #[error("insufficient draws: need at least {needed}, got {got}")]
    InsufficientDraws { needed: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate bandwidth: draws have zero spread")]
    DegenerateBandwidth,

    #[error("singular HC3 leverage: a group has a single observation")]
    SingularLeverage,

    #[error("target power unreachable below n_C = {cap}")]
    PowerUnreachable { cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),

    #[error("flat prior cannot be sampled for parameter `{0}`")]
    FlatPriorSampled(String),

    #[error("unknown operation group `{0}`")]
    UnknownOp(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("data validation: {0}")]
    Validation(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Prefixes the message with the name of the pipeline stage that produced it.
    pub fn in_module(self, module: &str) -> Self {
        match self {
            Error::Validation(m) => Error::Validation(format!("{module}: {m}")),
            Error::Config(m) => Error::Config(format!("{module}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{module}: {m}")),
            Error::InvalidParameter(m) => Error::InvalidParameter(format!("{module}: {m}")),
            Error::DegenerateData(m) => Error::DegenerateData(format!("{module}: {m}")),
            Error::NoConvergence(m) => Error::NoConvergence(format!("{module}: {m}")),
            other => other,
        }
    }
}
