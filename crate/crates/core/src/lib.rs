//! Two-view geometry scoring toolkit: exact epipolar geometry, error
//! criteria, robust hypothesis generation and scoring, and a synthetic
//! benchmark with evaluation metrics.

pub mod criteria;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod par;
pub mod poly;
pub mod rng;
pub mod robust;
pub mod synth;

pub use error::{Error, Result};
