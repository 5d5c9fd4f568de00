use std::fmt;

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Invalid flags or configuration (exit 2).
    Usage(String),
    /// Error raised by the library; the status depends on its kind.
    Core(wsep::Error),
    /// Reading inputs or writing outputs failed (exit 3).
    Io(String),
    /// The run completed but at least one verification flag failed (exit 1).
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use wsep::Error as E;
        match self {
            Self::Verification(_) => 1,
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
            Self::Core(e) => match e {
                E::ParameterDomain { .. } | E::InvalidInput(_) => 2,
                E::EmbeddingFailure { .. }
                | E::RootFinding { .. }
                | E::NonFinite(_)
                | E::TailInadequate(_)
                | E::BoundednessViolation { .. } => 3,
                E::Hypothesis(_) | E::RankUndetected { .. } | E::ZeroAnchorMass { .. } => 4,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Io(m) | Self::Verification(m) => f.write_str(m),
            Self::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<wsep::Error> for CliError {
    fn from(e: wsep::Error) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
