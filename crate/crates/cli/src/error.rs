use thiserror::Error;

/// Errors reported by the command line, each with a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),

    #[error("{0}")]
    Dimension(String),

    #[error("{0}")]
    Solver(String),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 2 parse or invalid input, 3 dimension mismatch or missing design,
    /// 4 solver failure, 1 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Dimension(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<cbrisk::Error> for CliError {
    fn from(e: cbrisk::Error) -> Self {
        use cbrisk::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParameter(_) | E::Config(_) | E::Json(_) | E::UnsupportedDivergence(_) => CliError::Parse(msg),
            E::DimensionMismatch { .. } | E::MissingContext(_) => CliError::Dimension(msg),
            E::NonConvergence { .. } | E::Factorization(_) | E::EmptyFold(_) | E::NonFinite(_) => CliError::Solver(msg),
            E::Io(_) | E::Csv(_) => CliError::Io(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
