use std::fmt;

/// Failure of one `ecfd` run, tagged with the exit-code category.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 64,
            Self::Config(_) => 65,
            Self::Runtime(_) => 1,
            Self::Check(_) => 2,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Config(_) => "config",
            Self::Runtime(_) => "runtime",
            Self::Check(_) => "check",
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Config(m) | Self::Runtime(m) | Self::Check(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // single line on stderr
        let flat: String = self.message().split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error[{}]: {flat}", self.category())
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

pub fn config<E: fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

pub fn runtime<E: fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}
