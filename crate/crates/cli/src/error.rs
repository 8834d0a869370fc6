//! CLI error type with machine-readable categories and stable exit codes.

use dfecs_core::eval::EvalError;
use dfecs_core::ffm::FfmError;
use dfecs_core::geometry::GeometryError;
use dfecs_core::io::IoError;
use dfecs_core::pipeline::PipelineError;
use dfecs_core::solvers::SolverError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Parse(String),
    Archive(String),
    Compute(String),
    Io(String),
}

impl CliError {
    /// Stable category token, printed on stderr as
    /// `dfecs-error: category=<token> message=<...>`.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Parse(_) => "parse",
            CliError::Archive(_) => "archive",
            CliError::Compute(_) => "compute",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Archive(_) => 4,
            CliError::Compute(_) => 5,
            CliError::Io(_) => 6,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Parse(m)
            | CliError::Archive(m)
            | CliError::Compute(m)
            | CliError::Io(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "category={} message={}", self.category(), self.message())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match &e {
            IoError::Io(_) => CliError::Io(e.to_string()),
            IoError::ChecksumMismatch
            | IoError::UnsupportedVersion(_)
            | IoError::LayoutMismatch(_)
            | IoError::Inconsistent(_) => CliError::Archive(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<FfmError> for CliError {
    fn from(e: FfmError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
