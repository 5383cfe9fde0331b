use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid feeder: {0}")]
    Feeder(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid placement: {0}")]
    Placement(String),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("power flow sweep did not converge after {iterations} iterations (slot {slot}, residual {residual:e})")]
    Divergence {
        slot: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("qp: {0}")]
    Qp(#[from] crate::qp::QpError),

    #[error("energy savings undefined: baseline loss is {0}")]
    UndefinedSavings(f64),

    #[error("unmatched front/rear pair for s_max={s_max}, a={a}, controller={controller}")]
    Pairing {
        s_max: f64,
        a: f64,
        controller: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
