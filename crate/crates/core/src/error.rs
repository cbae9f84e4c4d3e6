use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("signal of {len} samples is shorter than one frame ({needed} samples)")]
    SignalTooShort { len: usize, needed: usize },
    #[error("image {width}x{height} is too small: {reason}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        reason: &'static str,
    },
    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("subject `{subject}` is missing {what}")]
    MissingSample { subject: String, what: String },
    #[error("subject `{subject}` appears in {count} pairs, expected exactly one")]
    PairMembership { subject: String, count: usize },
    #[error("invalid sample `{sample_id}`: {reason}")]
    InvalidSample { sample_id: String, reason: String },
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("invalid weight {0}")]
    InvalidWeight(f64),
    #[error("score matrices disagree on {0}")]
    ScoreMismatch(&'static str),
    #[error("score matrix is already normalized")]
    AlreadyNormalized,
    #[error("score matrix is not normalized")]
    NotNormalized,
    #[error("fusion plan references unknown scorer `{0}`")]
    UnresolvedLeaf(String),
    #[error("invalid fusion plan: {0}")]
    InvalidPlan(String),
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}
