use serde::{Deserialize, Serialize};

use super::solvers::fit_homography;
use crate::criteria::sampson_or_inf;
use crate::geom::{Correspondence, FundamentalMatrix, Mat3, Vec3};
use crate::rng;

pub const CONSENSUS_ITERATIONS: usize = 20;
/// Share of the hypothesis inliers a single homography must explain.
pub const DEGENERATE_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    Sound,
    HomographyDegenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DegeneracyReport {
    pub verdict: Degeneracy,
    /// Fewer than four inliers; the verdict is sound by vacuity.
    pub low_support: bool,
    pub inliers: usize,
    pub homography_support: usize,
}

fn transfer(h: &Mat3, p: [f64; 2]) -> Option<[f64; 2]> {
    let q = h * Vec3::new(p[0], p[1], 1.0);
    if q.z.abs() < 1e-12 {
        return None;
    }
    Some([q.x / q.z, q.y / q.z])
}

/// Mean of forward and backward transfer distances, pixels.
pub fn symmetric_transfer_error(h: &Mat3, h_inv: &Mat3, c: &Correspondence) -> f64 {
    match (transfer(h, c.pa), transfer(h_inv, c.pb)) {
        (Some(fwd), Some(bwd)) => {
            let d1 = (fwd[0] - c.pb[0]).hypot(fwd[1] - c.pb[1]);
            let d2 = (bwd[0] - c.pa[0]).hypot(bwd[1] - c.pa[1]);
            0.5 * (d1 + d2)
        }
        _ => f64::INFINITY,
    }
}

fn support(h: &Mat3, pts: &[Correspondence], threshold: f64) -> Vec<usize> {
    let Some(h_inv) = h.try_inverse() else {
        return Vec::new();
    };
    pts.iter()
        .enumerate()
        .filter(|(_, c)| symmetric_transfer_error(h, &h_inv, c) < threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Flags a hypothesis whose inliers are mostly explained by one homography.
///
/// Inliers are correspondences with Sampson distance below `threshold²`; the
/// homography test uses the symmetric transfer error against `threshold`.
pub fn degeneracy_check(
    f: &FundamentalMatrix,
    corrs: &[Correspondence],
    threshold: f64,
) -> DegeneracyReport {
    let t2 = threshold * threshold;
    let inliers: Vec<Correspondence> = corrs
        .iter()
        .filter(|c| sampson_or_inf(f.matrix(), c) < t2)
        .copied()
        .collect();
    homography_consensus(&inliers, threshold)
}

/// The homography mini-consensus on an explicit inlier set.
pub fn homography_consensus(inliers: &[Correspondence], threshold: f64) -> DegeneracyReport {
    if inliers.len() < 4 {
        return DegeneracyReport {
            verdict: Degeneracy::Sound,
            low_support: true,
            inliers: inliers.len(),
            homography_support: 0,
        };
    }
    let mut rng = rng::stream(0, inliers.len() as u64, "degeneracy");
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..CONSENSUS_ITERATIONS {
        let idx = rng::sample_distinct(&mut rng, inliers.len(), 4);
        let sample: Vec<Correspondence> = idx.iter().map(|&i| inliers[i]).collect();
        if let Ok(h) = fit_homography(&sample) {
            let s = support(&h, inliers, threshold);
            if s.len() > best.len() {
                best = s;
            }
        }
    }
    if best.len() >= 4 {
        let subset: Vec<Correspondence> = best.iter().map(|&i| inliers[i]).collect();
        if let Ok(h) = fit_homography(&subset) {
            let s = support(&h, inliers, threshold);
            if s.len() > best.len() {
                best = s;
            }
        }
    }
    let verdict = if best.len() as f64 >= DEGENERATE_FRACTION * inliers.len() as f64 {
        Degeneracy::HomographyDegenerate
    } else {
        Degeneracy::Sound
    };
    DegeneracyReport {
        verdict,
        low_support: false,
        inliers: inliers.len(),
        homography_support: best.len(),
    }
}
