use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or missing inputs.
    #[error("{0}")]
    Config(String),
    /// Training or simulation produced non-finite numbers.
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }
}

fn is_numeric_tensor(e: &lullaby_autodiff::Error) -> bool {
    matches!(
        e,
        lullaby_autodiff::Error::NonFinite { .. } | lullaby_autodiff::Error::NonFiniteGradient { .. }
    )
}

impl From<lullaby_ppo::Error> for CliError {
    fn from(e: lullaby_ppo::Error) -> Self {
        use lullaby_ppo::Error as E;
        let msg = e.to_string();
        match e {
            E::Diverged { .. } | E::NonFiniteRatio { .. } => CliError::Numeric(msg),
            E::Tensor(ref t) if is_numeric_tensor(t) => CliError::Numeric(msg),
            E::Config(_) => CliError::Config(msg),
            E::Nets(n) => n.into(),
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<lullaby_nets::Error> for CliError {
    fn from(e: lullaby_nets::Error) -> Self {
        use lullaby_nets::Error as E;
        let msg = e.to_string();
        match e {
            E::Checkpoint { .. } | E::Config(_) | E::InputShape { .. } => CliError::Config(msg),
            E::Tensor(ref t) if is_numeric_tensor(t) => CliError::Numeric(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<lullaby_bench::Error> for CliError {
    fn from(e: lullaby_bench::Error) -> Self {
        use lullaby_bench::Error as E;
        match e {
            E::Nets(n) => n.into(),
            E::Invalid(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<lullaby_core::Error> for CliError {
    fn from(e: lullaby_core::Error) -> Self {
        use lullaby_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidInput(_) | E::RouteFile { .. } => CliError::Config(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
