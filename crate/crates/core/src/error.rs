use std::path::PathBuf;

/// Errors produced by the valve analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("nrrd: {0}")]
    Nrrd(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("label {0} is absent from the volume")]
    LabelAbsent(u8),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("no intersection: {0}")]
    NoIntersection(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
