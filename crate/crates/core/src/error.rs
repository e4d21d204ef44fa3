use thiserror::Error;

use crate::model::ValidityReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("grids are incompatible: {0}")]
    GridMismatch(String),

    #[error("diffusion coefficients violate the Lindblad condition (margin {:.6e})", .0.margin)]
    NotLindblad(Box<ValidityReport>),

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("matrix of dimension {dim} exceeds the dense cap {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("blow-up guard tripped at t = {time}: L2 norm grew by a factor {factor:.3e}")]
    BlowUp { time: f64, factor: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("snapshot format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
