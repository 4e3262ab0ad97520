use thiserror::Error;

/// Errors produced anywhere in the signal-design pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mixing matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("power constraint violated: {0}")]
    Constraint(String),
    #[error("codebook too large: {bits} bits exceeds the limit of {limit}")]
    TooLarge { bits: usize, limit: usize },
    #[error("measure {0} needs a noise/rate context")]
    MissingContext(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("degenerate moments: mu1={mu1}, mu2={mu2}")]
    DegenerateMoments { mu1: f64, mu2: f64 },
    #[error("no feasible component rates: outage threshold reached {eps}")]
    NoFeasibleRates { eps: f64 },
    #[error("no grid point meets the target; best value {best} at {snr_db} dB")]
    NotFound { best: f64, snr_db: f64 },
    #[error("objective evaluation failed at particle {particle} ({position:?}): {reason}")]
    Evaluation {
        particle: usize,
        position: Vec<f64>,
        reason: String,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status: 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateMoments { .. }
            | Error::NoFeasibleRates { .. }
            | Error::NotFound { .. }
            | Error::Evaluation { .. }
            | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
