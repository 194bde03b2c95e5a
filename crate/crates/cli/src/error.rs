use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent inputs: exit code 1.
    #[error("{0}")]
    Input(String),
    /// Numerical failure: exit code 2.
    #[error("{0}")]
    Numerical(String),
    /// Outputs were written but the fit did not converge: exit code 2.
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) | CliError::NotConverged(_) => 2,
        }
    }
}

impl From<epicount::Error> for CliError {
    fn from(e: epicount::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}
