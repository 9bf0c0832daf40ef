use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad invocation or configuration.
    Usage,
    /// Malformed, missing or inconsistent data.
    Data,
    /// A numerical fit failed.
    Fit,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("singular input: {0}")]
    SingularInput(String),
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("addressing error: {0}")]
    Addressing(String),
    #[error("routing error: {0}")]
    Routing(String),
    #[error("expected a {expected}-D record, got {got}-D")]
    Dimensionality { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no turn-on: current range {range:.3e} A is below the noise floor {floor:.3e} A")]
    NoTurnOn { range: f64, floor: f64 },
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
    #[error("unfittable diamond: {0}")]
    UnfittableDiamond(String),
    #[error("diamond geometry error: {0}")]
    DiamondGeometry(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("unsupported {what} version {found} (supported: {supported})")]
    UnsupportedVersion {
        what: &'static str,
        found: u32,
        supported: u32,
    },
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) => ErrorClass::Usage,
            Error::NoTurnOn { .. }
            | Error::NonConvergence(_)
            | Error::UnfittableDiamond(_)
            | Error::DiamondGeometry(_)
            | Error::DegenerateFit(_) => ErrorClass::Fit,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
