use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("kernel is not integrable: {0}")]
    NonIntegrable(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("grid of {nodes} nodes cannot reach tolerance {requested:e} (achieved {achieved:e})")]
    Resolution {
        nodes: usize,
        requested: f64,
        achieved: f64,
    },
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("singular implicit step for mode {mode}")]
    SingularStep { mode: usize },
    #[error("closure oracle requires exponential kernels: {0}")]
    UnsupportedOracle(String),
    #[error("degenerate mode at gamma = {gamma}: quartic denominator vanishes")]
    DegenerateMode { gamma: f64 },
    #[error("branch error at lambda = {lambda}: h0 - b(lambda) vanishes")]
    Branch { lambda: f64 },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("quadrature did not converge on [{a}, {b}] (estimated error {error:e})")]
    Quadrature { a: f64, b: f64, error: f64 },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the experiment description rather than by
    /// the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
