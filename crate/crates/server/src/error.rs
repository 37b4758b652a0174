use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Pipeline(#[from] streampca::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("pipeline stopped")]
    PipelineStopped,
}
