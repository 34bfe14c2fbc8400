use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure classes. The CLI maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed input: files, flags, parameters.
    Input,
    /// The causal structure does not support the requested computation.
    Structure,
    /// Positivity, collinearity or a singular closed-form term.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("conditioning on null event ({0})")]
    NullEvent(String),

    #[error("positivity violation: stratum {0} has zero probability")]
    Positivity(String),

    #[error("singular term {term}: {detail}")]
    Singular { term: String, detail: String },

    #[error("collinear regressors: {0}")]
    Collinear(String),

    #[error("independence assumption violated: {0}")]
    Dependence(String),

    #[error("structure mismatch: {0}")]
    Structure(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UnknownVariable(_)
            | Error::InvalidGraph(_)
            | Error::Parse { .. }
            | Error::InvalidQuery(_)
            | Error::InvalidParams(_)
            | Error::InvalidData(_)
            | Error::Io(_) => ErrorClass::Input,
            Error::Structure(_) | Error::Dependence(_) => ErrorClass::Structure,
            Error::NullEvent(_)
            | Error::Positivity(_)
            | Error::Singular { .. }
            | Error::Collinear(_) => ErrorClass::Numerical,
        }
    }

    pub(crate) fn singular(term: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Singular {
            term: term.into(),
            detail: detail.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
