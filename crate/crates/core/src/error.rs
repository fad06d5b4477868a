use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no interior node at h = {h}; the grid is too coarse for the domain")]
    NoInteriorNodes { h: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("node {0} is not a boundary node")]
    NotBoundary(usize),
    #[error("inconsistent classification at node {0}: no sign change toward the interior")]
    InconsistentClassification(usize),
    #[error("fields live on different grid domains")]
    DomainMismatch,
    #[error("sample point {0:?} leaves the closed discrete domain")]
    OutsideHull(Vec<f64>),
    #[error("no admissible constant up to K_max = {k_max}; worst eigenvalue {worst:e} at {point:?}")]
    ConstantNotFound {
        k_max: f64,
        worst: f64,
        point: Vec<f64>,
    },
    #[error("solver did not converge after {sweeps} sweeps (max update {max_update:e}, residual {residual:e})")]
    NotConverged {
        sweeps: usize,
        max_update: f64,
        residual: f64,
    },
    #[error("negative density {value} at {point:?}")]
    NegativeDensity { value: f64, point: Vec<f64> },
    #[error("sandwich violated by {excess:e} at {point:?}")]
    SandwichViolated { excess: f64, point: Vec<f64> },
    #[error("only {0} nonempty distance bins; at least 3 are needed")]
    TooFewBins(usize),
    #[error("translation {0:?} leaves no overlap with the domain")]
    EmptyOverlap(Vec<f64>),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
