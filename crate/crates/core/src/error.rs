use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {key}: {reason}")]
    Config { key: String, reason: String },

    #[error("coincident nodes: {0}")]
    CoincidentNodes(String),

    #[error("coalition too small to null {eavesdroppers} eavesdroppers (size {size})")]
    CoalitionTooSmall { size: usize, eavesdroppers: usize },

    #[error("coalition size {size} violates the admissible-size rule (must be 1 or > {eavesdroppers})")]
    InadmissibleSize { size: usize, eavesdroppers: usize },

    #[error("user {user} is not a member of coalition {coalition:?}")]
    NotAMember { user: usize, coalition: Vec<usize> },

    #[error("invalid coalition: {0}")]
    InvalidCoalition(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("collections cover different player sets")]
    PlayerSetMismatch,

    #[error("non-termination: no stable partition after {0} sweeps")]
    NonTermination(usize),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("invalid mobility trace: {0}")]
    InvalidTrace(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
