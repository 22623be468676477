use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate cluster")]
    DegenerateCluster,
    #[error("rank-deficient fit")]
    RankDeficientFit,
    #[error("degenerate hull")]
    DegenerateHull,
    #[error("non-positive distance: {0}")]
    NonPositiveDistance(f64),
    #[error("degenerate sample")]
    DegenerateSample,
    #[error("weibull fit failed")]
    WeibullFitFailed,
    #[error("at infinity in image")]
    AtInfinity,
    #[error("degenerate triangulation")]
    DegenerateTriangulation,
    #[error("unstable point")]
    UnstablePoint,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("not enough data: {0}")]
    NotEnoughData(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
}
