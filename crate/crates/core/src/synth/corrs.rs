use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::{PairSpec, SyntheticScene};
use crate::error::{Error, Result};
use crate::geom::Correspondence;
use crate::rng;

/// Correspondences with the ground-truth inlier mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledCorrespondences {
    pub correspondences: Vec<Correspondence>,
    pub inlier_mask: Vec<bool>,
}

/// Draws on uniformly random co-visible pixels of A before giving up.
const DRAWS_PER_INLIER: usize = 200;

/// Inliers are noisy projections of co-visible surface points (noise on both
/// images); outliers keep `pa` and draw `pb` uniformly over image B.
pub fn sample_correspondences(scene: &SyntheticScene, spec: &PairSpec, seed: u64) -> Result<SampledCorrespondences> {
    spec.validate()?;
    let n = spec.n_corrs;
    let n_out = (spec.outlier_rate * n as f64).round() as usize;
    let n_in = n - n_out;
    let mut rng = rng::stream(seed, 0, "correspondences");
    let noise = Normal::new(0.0, spec.noise_px).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (wmax, hmax) = ((scene.width - 1) as f64, (scene.height - 1) as f64);

    let mut points = Vec::with_capacity(n);
    let mut draws = 0usize;
    while points.len() < n_in {
        if draws >= DRAWS_PER_INLIER * n_in.max(1) {
            return Err(Error::SceneGeneration("no co-visible surface to sample".into()));
        }
        draws += 1;
        let pa = [rng.gen_range(0.0..=wmax), rng.gen_range(0.0..=hmax)];
        if let Some(pb) = scene.covisible(pa) {
            let mut c = Correspondence::new(pa, pb);
            if spec.noise_px > 0.0 {
                c.pa[0] += noise.sample(&mut rng);
                c.pa[1] += noise.sample(&mut rng);
                c.pb[0] += noise.sample(&mut rng);
                c.pb[1] += noise.sample(&mut rng);
            }
            points.push((c, true));
        }
    }
    for _ in 0..n_out {
        let pa = [rng.gen_range(0.0..=wmax), rng.gen_range(0.0..=hmax)];
        let pb = [rng.gen_range(0.0..=wmax), rng.gen_range(0.0..=hmax)];
        points.push((Correspondence::new(pa, pb), false));
    }
    // interleave inliers and outliers
    for i in (1..points.len()).rev() {
        let j = rng::index(&mut rng, i + 1);
        points.swap(i, j);
    }
    let (correspondences, inlier_mask) = points.into_iter().unzip();
    Ok(SampledCorrespondences {
        correspondences,
        inlier_mask,
    })
}

/// Noiseless correspondences for every co-visible pixel of A on a grid with
/// spacing `grid_step` pixels.
pub fn dense_gt(scene: &SyntheticScene, grid_step: f64) -> Result<Vec<Correspondence>> {
    if !(grid_step > 0.0) || !grid_step.is_finite() {
        return Err(Error::InvalidArgument(format!("grid step must be positive, got {grid_step}")));
    }
    let mut out = Vec::new();
    let mut y = 0.0;
    while y <= (scene.height - 1) as f64 {
        let mut x = 0.0;
        while x <= (scene.width - 1) as f64 {
            if let Some(pb) = scene.covisible([x, y]) {
                out.push(Correspondence::new([x, y], pb));
            }
            x += grid_step;
        }
        y += grid_step;
    }
    if out.is_empty() {
        return Err(Error::Empty("co-visible set"));
    }
    Ok(out)
}
