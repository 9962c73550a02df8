//! A learned scorer for fundamental-matrix hypotheses that reads the two
//! images directly, with the small reverse-mode differentiation engine it
//! trains on.

pub mod attention;
pub mod config;
pub mod epipolar;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod model;
pub mod preprocess;
pub mod tensor;
pub mod train;
pub mod weights;

pub use config::{NetworkConfig, Precision};
pub use error::{FsnetError, Result};
pub use model::{
    epipolar_cross_attention, extract_features, forward_score, regress_pose_error, score_hypotheses,
    select_hypothesis, transform_pair, FeatureCache, ScoreOutput,
};
pub use tensor::Tensor;
pub use weights::Weights;
