use std::path::Path;

/// Process exit status for a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    /// Bad flags, bad config, unknown preset.
    Config = 2,
    /// Simulation, fit or I/O failure while running.
    Runtime = 3,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub class: ExitClass,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            class: ExitClass::Config,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            class: ExitClass::Runtime,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class as i32
    }

    pub fn context(mut self, what: impl std::fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::runtime(format!("{}: {e}", path.display()))
    }
}

impl From<fesim_core::Error> for CliError {
    fn from(e: fesim_core::Error) -> Self {
        if e.is_config() {
            Self::config(e.to_string())
        } else {
            Self::runtime(e.to_string())
        }
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        Self::config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
