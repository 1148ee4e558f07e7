use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("vehicle stalled at {position:.1} m (t = {time:.1} s): {reason}")]
    Stalled { position: f64, time: f64, reason: String },
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("route file {path}: {reason}")]
    RouteFile { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
