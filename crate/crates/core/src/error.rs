use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("excitation-sector decomposition unavailable: commutator norm {0:e}")]
    SectorDecompositionUnavailable(f64),
    #[error("numerical instability: {0}")]
    NumericalInstability(String),
    #[error("propagation diverged: {0}")]
    PropagationDiverged(String),
    #[error("gate is rank deficient (smallest singular value {0:e}); concurrence undefined")]
    ConcurrenceUndefined(f64),
    #[error("environment episode already finished; call reset first")]
    EpisodeFinished,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
