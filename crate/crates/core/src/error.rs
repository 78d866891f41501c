use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be odd and positive, got {0}")]
    InvalidDimension(usize),

    #[error("generator index {index} out of range for d = {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("hopping matrices violate chiral symmetry (residual {residual:.3e})")]
    NotChiral { residual: f64 },

    #[error("lattice size {size} must exceed twice the hopping range {range}")]
    LatticeTooSmall { size: usize, range: usize },

    #[error("flux {flux} on axes ({i}, {j}) is not commensurate with L = {size}")]
    IncommensurateFlux { i: usize, j: usize, flux: f64, size: usize },

    #[error("operation requires a clean periodic model: {0}")]
    NotPeriodic(&'static str),

    #[error("gapless sample: min |E| = {min_abs_energy:.3e} <= tolerance {tolerance:.1e}")]
    GaplessSample { min_abs_energy: f64, tolerance: f64 },

    #[error("contour quadrature did not converge: ||Q^2 - 1|| = {residual:.3e}")]
    QuadratureNotConverged { residual: f64 },

    #[error("ensemble of {got} samples is too small (need at least {need})")]
    InsufficientEnsemble { got: usize, need: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
