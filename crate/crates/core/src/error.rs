use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside domain: {0}")]
    Domain(String),
    #[error("value outside range: {0}")]
    Range(String),
    #[error("map not invertible at {0}")]
    NotInvertible(String),
    #[error("breakpoints not monotone at {0}")]
    NotIncreasing(String),
    #[error("lower envelope exceeds upper envelope at {0}")]
    EnvelopeOrder(String),
    #[error("envelope endpoints must fix -1 and 1")]
    Endpoints,
    #[error("family members overlap: {0}")]
    Overlap(String),
    #[error("family member outside (0, 1/2]: {0}")]
    OutOfRange(String),
    #[error("stage cap {0} reached while advancing")]
    StageOverflow(u32),
    #[error("evaluation needs stages beyond the cap {0}")]
    CapReached(u32),
    #[error("internal monotonicity violation: {0}")]
    InternalOrder(String),
    #[error("reflected member collides with an existing member: {0}")]
    ReflectionCollision(String),
    #[error("invalid disk specification: {0}")]
    InvalidDisk(String),
    #[error("point not in the quotient image: {0}")]
    NotInImage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
