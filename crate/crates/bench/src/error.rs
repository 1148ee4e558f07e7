use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] lullaby_core::Error),
    #[error(transparent)]
    Nets(#[from] lullaby_nets::Error),
    #[error("invalid benchmark input: {0}")]
    Invalid(String),
    #[error("trip on route {route_seed} / traffic {traffic_seed} with `{policy}` failed: {source}")]
    Trip {
        policy: String,
        route_seed: u64,
        traffic_seed: u64,
        source: lullaby_core::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
