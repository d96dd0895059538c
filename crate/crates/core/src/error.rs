use alloc::string::String;

use crate::slice::SliceId;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duration must be positive, got {0} s")]
    NonPositiveDuration(f64),
    #[error("at least one slice profile is required")]
    NoProfiles,
    #[error("input is empty")]
    EmptyInput,
    #[error("input is not time-ordered at record {index}")]
    Unordered { index: usize },
    #[error("attack intensity {0} is outside (0, 1]")]
    InvalidIntensity(f64),
    #[error("forged field set is empty")]
    EmptyFieldSet,
    #[error("window length {0} us is outside the supported 1-4 s range")]
    InvalidWindow(u64),
    #[error("token multiset is empty")]
    EmptyMultiset,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dataset contains a single class")]
    SingleClass,
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no model registered for slice {0} and no fallback configured")]
    NoRoute(SliceId),
    #[error("no slice with SST {0}")]
    UnknownSst(u8),
    #[error("feature importance by impurity decrease needs a random forest")]
    NotAForest,
    #[error("need at least {needed} capture sessions, got {got}")]
    TooFewSessions { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
