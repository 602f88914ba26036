use qrsl_core::steps::StepError;
use std::fmt;
use std::path::Path;

/// Failure class, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Io,
    Infeasible,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Io => 3,
            Kind::Infeasible => 4,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Io => "io",
            Kind::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: Kind::Config, message: message.into() }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self { kind: Kind::Io, message: format!("{}: {err}", path.display()) }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind.label(), "message": self.message }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.label(), self.message)
    }
}

impl From<StepError> for CliError {
    fn from(e: StepError) -> Self {
        let kind = match e {
            StepError::Infeasible { .. } => Kind::Infeasible,
            _ => Kind::Config,
        };
        Self { kind, message: e.to_string() }
    }
}

/// Attaches the offending file to a parse error.
pub trait Context<T> {
    fn in_file(self, path: &Path) -> Result<T>;
}

impl<T, E: fmt::Display> Context<T> for std::result::Result<T, E> {
    fn in_file(self, path: &Path) -> Result<T> {
        self.map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}
