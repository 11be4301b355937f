//! Crate-wide error type.

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// Invalid sampler parameters or overlapping/degenerate shapes.
    Geometry(String),
    /// Rasterized complement split into more than one component.
    Connectivity { components: usize },
    /// Bad experiment configuration (missing fields, incommensurate grids).
    Config(String),
    /// Iterative solver did not reach the requested residual.
    Solver { message: String, history: Vec<f64> },
    /// An internal identity check (dual formulas, corrector identities) failed.
    Consistency(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Geometry(msg) => write!(f, "geometry error: {msg}"),
            Error::Connectivity { components } => {
                write!(f, "complement disconnected: {components} components")
            }
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Solver { message, history } => {
                write!(f, "solver error: {message} ({} residuals recorded)", history.len())
            }
            Error::Consistency(msg) => write!(f, "consistency error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
