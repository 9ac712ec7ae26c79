use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the density-reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed rows at lines {}", format_lines(.lines))]
    Parse { path: PathBuf, lines: Vec<usize> },
}

fn format_lines(lines: &[usize]) -> String {
    lines
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
