use thiserror::Error;

use crate::model::EiId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gained completeness is undefined: profile set contains no CEIs")]
    UndefinedMetric,
    #[error("execution interval {0} scored after its deadline")]
    ScoredAfterDeadline(EiId),
    #[error("unknown execution interval {0}")]
    UnknownEi(EiId),
    #[error("duplicate identifier {0} in profile set")]
    DuplicateId(String),
    #[error("profile set contains no CEIs")]
    EmptyProfileSet,
    #[error("a CEI must contain at least one execution interval")]
    EmptyCei,
    #[error("an epoch needs at least one chronon")]
    EmptyEpoch,
    #[error("invalid interval: need 1 <= start <= finish, got [{start},{finish}]")]
    InvalidInterval { start: u32, finish: u32 },
    #[error("interval [{start},{finish}] lies outside the epoch 1..={chronons}")]
    IntervalOutsideEpoch {
        start: u32,
        finish: u32,
        chronons: u32,
    },
    #[error("budget vector has {got} entries but the epoch has {expected} chronons")]
    BudgetLengthMismatch { got: usize, expected: usize },
    #[error("update intensity must be positive, got {0}")]
    NonPositiveIntensity(f64),
    #[error("zipf domain must contain at least one index")]
    EmptyZipfDomain,
    #[error("cannot draw {want} distinct resources from {have}")]
    DistinctExhausted { want: u32, have: u32 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(
        "instance too large for exact oracle: ~10^{estimate:.1} search nodes exceeds 10^{ceiling:.1}"
    )]
    OracleTooLarge { estimate: f64, ceiling: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
