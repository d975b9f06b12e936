use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("field not localized: boundary/max = {ratio:.3e} exceeds {limit:.1e}")]
    Localization { ratio: f64, limit: f64 },
    #[error("frame overflow at t = {t}: mode (k index {kx}, eta index {ky}) leaves the grid")]
    FrameOverflow { t: f64, kx: i64, ky: i64 },
    #[error("frame shift at t = {t} is not an integer number of eta cells")]
    OffGridShift { t: f64 },
    #[error("run blew up at t = {t}: {what}")]
    Unstable { t: f64, what: String },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
