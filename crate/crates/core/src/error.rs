use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature on [{lo}, {hi}] did not converge within {max_depth} subdivision levels")]
    QuadratureDiverged { lo: f64, hi: f64, max_depth: u32 },

    #[error("optimizer stopped at iteration cap with gradient norm {grad_norm:e}")]
    NotConverged { grad_norm: f64 },

    #[error("importance sampling degenerated: effective sample size {ess:.1} of {n}")]
    DegenerateImportanceWeights { ess: f64, n: usize },

    #[error("imbalance correction denominator is not positive ({0:e})")]
    NonPositiveDenominator(f64),

    #[error("corpus line {line}: {msg}")]
    Corpus { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
