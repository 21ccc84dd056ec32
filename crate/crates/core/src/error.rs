use std::fmt;

/// Errors shared across the library.
#[derive(Debug)]
pub enum Error {
    /// Mesh or space constructed with non-positive or too-small dimensions.
    InvalidDimension(String),
    /// Operator requested for a (source, target) space pair outside the supported families.
    UnsupportedPair {
        src: &'static str,
        target: &'static str,
    },
    /// Two fields expected to share a function space do not.
    SpaceMismatch,
    /// Source space does not embed in the requested richer space.
    NonEmbeddableTag {
        src: &'static str,
        target: &'static str,
    },
    /// Normal velocity on a rigid wall exceeded the no-flow tolerance.
    WallFluxViolation { max_flux: f64 },
    /// Iterative solver failed to reach the requested residual.
    SolverDidNotConverge { residual: f64 },
    /// A local or global linear system was singular.
    SingularSystem(&'static str),
    /// No Courant number in the scanned range produced amplification above unity.
    NoInstabilityFound,
    /// Too few or degenerate data points.
    DegenerateInput(String),
    /// Time step violates the stability limit of the configured scheme.
    CflViolation { courant: f64, limit: f64 },
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDimension(msg) => write!(f, "invalid dimension: {msg}"),
            Error::UnsupportedPair { src, target } => {
                write!(f, "unsupported space pair: {src} -> {target}")
            }
            Error::SpaceMismatch => write!(f, "fields live in different function spaces"),
            Error::NonEmbeddableTag { src, target } => {
                write!(f, "space {src} does not embed in {target}")
            }
            Error::WallFluxViolation { max_flux } => {
                write!(f, "normal velocity {max_flux:.3e} on a rigid wall exceeds tolerance")
            }
            Error::SolverDidNotConverge { residual } => {
                write!(f, "linear solver stalled at relative residual {residual:.3e}")
            }
            Error::SingularSystem(what) => write!(f, "singular linear system: {what}"),
            Error::NoInstabilityFound => {
                write!(f, "amplification never exceeded unity over the scanned Courant range")
            }
            Error::DegenerateInput(msg) => write!(f, "degenerate input: {msg}"),
            Error::CflViolation { courant, limit } => {
                write!(f, "Courant number {courant:.4} exceeds stability limit {limit:.4}")
            }
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
