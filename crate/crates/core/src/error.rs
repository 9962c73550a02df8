use thiserror::Error;

/// Errors raised by the geometry, estimation and benchmark modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("zero baseline: translation norm {0:e} is below 1e-12")]
    ZeroBaseline(f64),
    #[error("camera intrinsics are not invertible")]
    SingularIntrinsics,
    #[error("matrix has zero norm")]
    ZeroMatrix,
    #[error("matrix violates its manifold invariant: {0}")]
    NotOnManifold(&'static str),
    #[error("cheirality undecidable: no candidate pose puts any point in front of both cameras")]
    Undecidable,
    #[error("need {needed} correspondences, got {got}")]
    NotEnoughCorrespondences { needed: usize, got: usize },
    #[error("degenerate sample: design matrix is rank deficient")]
    DegenerateSample,
    #[error("scale factor must be positive, got {0}")]
    InvalidScale(f64),
    #[error("residual is indeterminate: the epipolar line is degenerate")]
    IndeterminateResidual,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("pool exhausted: produced {produced} of {wanted} hypotheses in {attempts} sampling attempts")]
    PoolExhausted {
        produced: usize,
        wanted: usize,
        attempts: usize,
    },
    #[error("scene generation failed: {0}")]
    SceneGeneration(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
