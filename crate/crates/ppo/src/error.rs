use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nets(#[from] lullaby_nets::Error),
    #[error(transparent)]
    Tensor(#[from] lullaby_autodiff::Error),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("environment failed in episode {episode} at step {step}: {source}")]
    Environment {
        episode: usize,
        step: usize,
        source: lullaby_core::Error,
    },
    #[error("non-finite probability ratio at buffer step {step} (new log-prob {new}, old log-prob {old})")]
    NonFiniteRatio { step: usize, new: f64, old: f64 },
    #[error("training diverged at iteration {iteration}: {what} (parameter norm {param_norm:.6e})")]
    Diverged {
        iteration: usize,
        what: String,
        param_norm: f64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
