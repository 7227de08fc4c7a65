use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("inconsistent spectrum: {0}")]
    InconsistentSpectrum(String),

    #[error("inconsistent magnitude data: {0}")]
    InconsistentData(String),

    #[error("problem too large for dense analysis: {0}")]
    TooLarge(String),

    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),

    #[error("spectral overlap between packets: {0:?}")]
    SpectralOverlap(Vec<(usize, usize)>),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("bad raster file: {0}")]
    BadFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
