use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] lullaby_autodiff::Error),
    #[error(transparent)]
    Core(#[from] lullaby_core::Error),
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("input shape: expected {expected_k} x {expected_dim}, got {k} x {dim}")]
    InputShape {
        expected_k: usize,
        expected_dim: usize,
        k: usize,
        dim: usize,
    },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
