use alloc::string::String;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("stiff or blow-up: step size underflow at t = {t}")]
    StiffOrBlowUp { t: f64 },
    #[error("domain escape: non-finite value at t = {t}")]
    DomainEscape { t: f64 },
    #[error("singular linear system")]
    Singular,
    #[error("not star-shaped at node {0:?}")]
    NotStarShaped([f64; 4]),
    #[error("input outside the domain: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("map is not near the identity: {0}")]
    NotNearIdentity(String),
    #[error("smallness threshold exceeded: measured {measured}, threshold {threshold}")]
    ThresholdExceeded { measured: f64, threshold: f64 },
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("mixed units: cannot compare pi^{0} with pi^{1}")]
    MixedUnits(i32, i32),
    #[error("stage {stage} missed its budget {budget}: measured {measured}")]
    StageBudget { stage: usize, budget: f64, measured: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
