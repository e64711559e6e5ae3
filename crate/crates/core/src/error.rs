use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("symbol {symbol} at position {position} is outside an alphabet of size {size}")]
    InvalidPrefix { symbol: u32, position: usize, size: usize },

    #[error("seed {0} is outside the open unit interval")]
    SeedOutOfRange(f64),

    #[error("identical seeds {0}: comparison cost is undefined for equal words")]
    IdenticalSeeds(f64),

    #[error("seed array contains the value {0} more than once")]
    SeedCollision(f64),

    #[error("symbol depth cap of {0} reached before the words could be told apart")]
    DepthCap(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-integrable configuration: {0}")]
    NonIntegrable(String),

    #[error("empty sample")]
    EmptySample,

    #[error("sample of size {size} is below the required minimum of {min}")]
    SampleTooSmall { size: usize, min: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
