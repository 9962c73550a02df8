//! Synthetic multi-plane benchmark scenes.

mod corrs;
mod render;
mod scene;

pub use corrs::{dense_gt, sample_correspondences, SampledCorrespondences};
pub use render::{render, render_pair, texture, value_noise, Image};
pub use scene::{
    generate_scene, PairSpec, Plane, SceneConfig, SyntheticScene, View, DEPTH_TOLERANCE, OVERLAP_GRID,
};
