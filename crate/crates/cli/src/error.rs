use std::fmt;
use std::process::ExitCode;

/// Failure classes mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file or missing inputs: exit 2.
    Config(String),
    /// Generation, training or evaluation failed: exit 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<pilnm_core::Error> for CliError {
    fn from(e: pilnm_core::Error) -> Self {
        match e {
            pilnm_core::Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Runtime(error_chain(&other)),
        }
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        let next = s.to_string();
        if !msg.contains(&next) {
            msg.push_str(": ");
            msg.push_str(&next);
        }
        src = s.source();
    }
    msg
}
