use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    /// Escape or collision; whatever was computed before it has been written.
    Dynamical(String),
    /// Solver did not converge; `diagnostics` is written as JSON when present.
    Solver { message: String, diagnostics: Option<serde_json::Value> },
    Usage(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Dynamical(_) => 2,
            CliError::Solver { .. } => 3,
            CliError::Usage(_) => 64,
        }
    }

    pub fn exit(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    /// Errors from the library. Bad inputs are usage errors; everything else
    /// that is not the dynamics is a solver failure.
    pub fn from_core(e: boltzmann::Error) -> Self {
        use boltzmann::Error as E;
        if e.is_dynamical() {
            return CliError::Dynamical(e.to_string());
        }
        match e {
            E::Domain(m) => CliError::Usage(m),
            E::Optimizer(d) => CliError::Solver {
                message: format!("optimizer failed: {d}"),
                diagnostics: serde_json::to_value(&d).ok(),
            },
            other => CliError::Solver { message: other.to_string(), diagnostics: None },
        }
    }

    /// Like [`CliError::from_core`] but for calls whose inputs were already
    /// validated, so a domain error means the solver went astray.
    pub fn from_solver(e: boltzmann::Error) -> Self {
        match e {
            boltzmann::Error::Domain(m) => CliError::Solver { message: m, diagnostics: None },
            other => CliError::from_core(other),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Dynamical(m) => write!(f, "dynamical error: {m}"),
            CliError::Solver { message, .. } => write!(f, "solver failure: {message}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
