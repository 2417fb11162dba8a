use thiserror::Error;

/// Errors surfaced by the library.
///
/// `AccessDenied` is the protocol-level rejection (no gate of the hidden
/// policy matches the caller's key); everything else is a caller or data
/// error.
#[derive(Error, Debug)]
pub enum Error {
    #[error("access denied (no matching gate)")]
    AccessDenied,

    #[error("payload authentication failed")]
    PayloadAuth,

    #[error("offline ciphertext already consumed")]
    OfflineConsumed,

    #[error("offline pool is empty")]
    EmptyPool,

    #[error("universe mismatch: {0}")]
    UniverseMismatch(String),

    #[error("invalid {kind}: {reasons:?}")]
    Invalid { kind: &'static str, reasons: Vec<String> },

    #[error("epoch {requested} not allowed: {reason}")]
    InvalidEpoch { requested: u64, reason: String },

    #[error("unknown object `{0}`")]
    UnknownObject(String),

    #[error("unknown gate {gate} in object `{object}`")]
    UnknownGate { object: String, gate: u64 },

    #[error("object `{0}` has no published ciphertext")]
    NotPublished(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("counter mismatch for {op}: expected {expected}, got {actual}")]
    CounterMismatch { op: String, expected: String, actual: String },

    #[error("capability violation: {0}")]
    Capability(String),

    #[error("protocol order violation: {0}")]
    ProtocolOrder(String),

    #[error("script error at line {line}: {message}")]
    Script { line: usize, message: String },

    #[error("scenario expectation failed at line {line}: {message}")]
    Expectation { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(kind: &'static str, reasons: Vec<String>) -> Self {
        Error::Invalid { kind, reasons }
    }
}
