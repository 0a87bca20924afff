use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("voxel size must be positive, got {0}")]
    NonPositiveVoxel(f64),
    #[error("rotation is at gimbal lock (|cos beta| below threshold)")]
    GimbalLock,
    #[error("only {matched} correspondences survived gating, need at least 3")]
    DegenerateCorrespondences { matched: usize },
    #[error("point covariance is rank-deficient")]
    DegenerateCovariance,
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("viewpoint lies inside the model's bounding sphere")]
    ViewpointInsideModel,
    #[error("region of interest holds {points} points, need at least {needed}")]
    RoiTooSparse { points: usize, needed: usize },
    #[error("every shot was rejected by the overlap filter")]
    AllShotsRejected,
    #[error("motion pairs do not excite two independent rotation axes")]
    InsufficientMotion,
    #[error("linear system is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("bounding box has zero volume")]
    ZeroVolume,
    #[error("no point matched within the distance gate")]
    NoMatches,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("reports do not describe the same shape and metrics")]
    ShapeMismatch,
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
}
