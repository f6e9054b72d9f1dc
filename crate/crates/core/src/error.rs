use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fixed-point overflow: {0}")]
    Overflow(String),
    #[error("modulus mismatch: {0} vs {1}")]
    ModulusMismatch(String, String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("party {party} aborted: {reason}")]
    Abort { party: usize, reason: String },
    #[error("party {party} desynchronized: {detail}")]
    Desync { party: usize, detail: String },
    #[error("party {party} timed out waiting for party {peer}")]
    Timeout { party: usize, peer: usize },
    #[error("channel to party {0} closed")]
    ChannelClosed(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("missing forward cache for layer {0}")]
    MissingCache(usize),
    #[error("format error: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn abort(party: usize, reason: impl Into<String>) -> Self {
        Error::Abort {
            party,
            reason: reason.into(),
        }
    }

    pub fn is_abort(&self) -> bool {
        matches!(self, Error::Abort { .. })
    }
}
