//! Minimal and least-squares solvers for F, E and homographies.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    CameraIntrinsics, Correspondence, EssentialMatrix, FundamentalMatrix, Mat3, Model, ModelKind,
};
use crate::poly;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Seven-point fundamental solver (1–3 solutions).
    F7,
    /// Normalized eight-point fundamental solver.
    F8,
    /// Eight-point essential solver in normalized camera coordinates.
    E8,
}

impl Solver {
    pub fn sample_size(&self) -> usize {
        match self {
            Solver::F7 => 7,
            Solver::F8 | Solver::E8 => 8,
        }
    }

    pub fn model_kind(&self) -> ModelKind {
        match self {
            Solver::F7 | Solver::F8 => ModelKind::Fundamental,
            Solver::E8 => ModelKind::Essential,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Solver::F7 => "f7",
            Solver::F8 => "f8",
            Solver::E8 => "e8",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f7" => Ok(Solver::F7),
            "f8" => Ok(Solver::F8),
            "e8" => Ok(Solver::E8),
            _ => Err(Error::InvalidArgument(format!("unknown solver {s:?}"))),
        }
    }
}

/// Similarity taking points to zero centroid and mean distance √2.
pub(crate) fn hartley_normalize(points: &[[f64; 2]]) -> Result<(Mat3, Vec<[f64; 2]>)> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| (p[0] - cx).hypot(p[1] - cy))
        .sum::<f64>()
        / n;
    if !(mean_dist > 1e-12) || !mean_dist.is_finite() {
        return Err(Error::DegenerateSample);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Mat3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = points
        .iter()
        .map(|p| [s * (p[0] - cx), s * (p[1] - cy)])
        .collect();
    Ok((t, out))
}

/// Right singular vectors of `rows` (padded to at least 9 rows) ordered by
/// increasing singular value, together with those singular values.
fn null_space(rows: &[[f64; 9]]) -> Result<(Vec<[f64; 9]>, Vec<f64>)> {
    let m = rows.len().max(9);
    let mut a = DMatrix::<f64>::zeros(m, 9);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..9 {
            a[(i, j)] = r[j];
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(Error::DegenerateSample)?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&x, &y| s[x].total_cmp(&s[y]));
    let vecs = order
        .iter()
        .map(|&i| {
            let mut v = [0.0; 9];
            for j in 0..9 {
                v[j] = vt[(i, j)];
            }
            v
        })
        .collect();
    Ok((vecs, order.iter().map(|&i| s[i]).collect()))
}

fn epipolar_rows(a: &[[f64; 2]], b: &[[f64; 2]]) -> Vec<[f64; 9]> {
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            let (x, y, xp, yp) = (p[0], p[1], q[0], q[1]);
            [xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0]
        })
        .collect()
}

fn vec_to_mat(v: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(v)
}

fn split_points(corrs: &[Correspondence]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    corrs.iter().map(|c| (c.pa, c.pb)).unzip()
}

/// Seven-point algorithm: real roots of `det(αF₁ + (1-α)F₂) = 0`.
pub fn solve_f7(sample: &[Correspondence]) -> Result<Vec<FundamentalMatrix>> {
    if sample.len() != 7 {
        return Err(Error::NotEnoughCorrespondences {
            needed: 7,
            got: sample.len(),
        });
    }
    let (pa, pb) = split_points(sample);
    let (ta, na) = hartley_normalize(&pa)?;
    let (tb, nb) = hartley_normalize(&pb)?;
    let (vecs, s) = null_space(&epipolar_rows(&na, &nb))?;
    // a proper 7-point sample leaves exactly a two-dimensional null space
    if s[2] <= 1e-10 * s[8] {
        return Err(Error::DegenerateSample);
    }
    let f1 = vec_to_mat(&vecs[0]);
    let f2 = vec_to_mat(&vecs[1]);
    let det_at = |alpha: f64| (f1 * alpha + f2 * (1.0 - alpha)).determinant();
    let p0 = det_at(0.0);
    let p1 = det_at(1.0);
    let pm1 = det_at(-1.0);
    let p2 = det_at(2.0);
    let c0 = p0;
    let c2 = 0.5 * (p1 + pm1) - c0;
    let odd = 0.5 * (p1 - pm1);
    let c3 = (0.5 * (p2 - c0 - 4.0 * c2) - odd) / 3.0;
    let c1 = odd - c3;
    let mut out = Vec::with_capacity(3);
    for alpha in poly::real_roots(&[c0, c1, c2, c3], 1e-8) {
        let f = f1 * alpha + f2 * (1.0 - alpha);
        let denorm = tb.transpose() * f * ta;
        if let Ok(fm) = FundamentalMatrix::from_matrix(&denorm) {
            if !out.contains(&fm) {
                out.push(fm);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::DegenerateSample);
    }
    Ok(out)
}

fn eight_point(pa: &[[f64; 2]], pb: &[[f64; 2]]) -> Result<Mat3> {
    if pa.len() < 8 {
        return Err(Error::NotEnoughCorrespondences {
            needed: 8,
            got: pa.len(),
        });
    }
    let (ta, na) = hartley_normalize(pa)?;
    let (tb, nb) = hartley_normalize(pb)?;
    let (vecs, s) = null_space(&epipolar_rows(&na, &nb))?;
    if s[1] <= 1e-10 * s[8] {
        return Err(Error::DegenerateSample);
    }
    let f = vec_to_mat(&vecs[0]);
    let (u, mut sv, v) = crate::geom::svd3(&f)?;
    sv[2] = 0.0;
    let f = u * Mat3::from_diagonal(&sv) * v.transpose();
    Ok(tb.transpose() * f * ta)
}

/// Normalized eight-point fundamental solver (least squares for more than 8 points).
pub fn solve_f8(corrs: &[Correspondence]) -> Result<FundamentalMatrix> {
    let (pa, pb) = split_points(corrs);
    FundamentalMatrix::from_matrix(&eight_point(&pa, &pb)?)
}

/// Eight-point essential solver in normalized camera coordinates with
/// projection onto the essential manifold.
pub fn solve_e8(
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
) -> Result<EssentialMatrix> {
    ka.inverse()?;
    kb.inverse()?;
    let pa: Vec<[f64; 2]> = corrs.iter().map(|c| ka.normalize(c.pa)).map(|v| [v.x, v.y]).collect();
    let pb: Vec<[f64; 2]> = corrs.iter().map(|c| kb.normalize(c.pb)).map(|v| [v.x, v.y]).collect();
    EssentialMatrix::from_matrix(&eight_point(&pa, &pb)?)
}

/// Runs a solver on a sample; returns every model it produces.
pub fn solve_minimal(
    sample: &[Correspondence],
    solver: Solver,
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
) -> Result<Vec<Model>> {
    match solver {
        Solver::F7 => Ok(solve_f7(sample)?.into_iter().map(Model::Fundamental).collect()),
        Solver::F8 => Ok(vec![Model::Fundamental(solve_f8(sample)?)]),
        Solver::E8 => Ok(vec![Model::Essential(solve_e8(sample, ka, kb)?)]),
    }
}

/// Normalized DLT homography `p_B ~ H p_A` from four or more correspondences.
pub fn fit_homography(corrs: &[Correspondence]) -> Result<Mat3> {
    if corrs.len() < 4 {
        return Err(Error::NotEnoughCorrespondences {
            needed: 4,
            got: corrs.len(),
        });
    }
    let (pa, pb) = split_points(corrs);
    let (ta, na) = hartley_normalize(&pa)?;
    let (tb, nb) = hartley_normalize(&pb)?;
    let mut rows = Vec::with_capacity(2 * corrs.len());
    for (p, q) in na.iter().zip(&nb) {
        let (x, y, xp, yp) = (p[0], p[1], q[0], q[1]);
        rows.push([-x, -y, -1.0, 0.0, 0.0, 0.0, xp * x, xp * y, xp]);
        rows.push([0.0, 0.0, 0.0, -x, -y, -1.0, yp * x, yp * y, yp]);
    }
    let (vecs, s) = null_space(&rows)?;
    if s[1] <= 1e-10 * s[8] {
        return Err(Error::DegenerateSample);
    }
    let h = vec_to_mat(&vecs[0]);
    let tb_inv = tb.try_inverse().ok_or(Error::DegenerateSample)?;
    let h = tb_inv * h * ta;
    if h.determinant().abs() < 1e-15 * h.norm().powi(3) {
        return Err(Error::DegenerateSample);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(pa: [f64; 2], pb: [f64; 2]) -> Correspondence {
        Correspondence::new(pa, pb)
    }

    #[test]
    fn f7_rejects_wrong_sample_size() {
        let six = vec![c([0.0, 0.0], [1.0, 1.0]); 6];
        assert_eq!(
            solve_f7(&six).unwrap_err(),
            Error::NotEnoughCorrespondences { needed: 7, got: 6 }
        );
        let k = CameraIntrinsics::identity();
        assert!(solve_minimal(&six, Solver::F7, &k, &k).is_err());
        assert!(solve_minimal(&six, Solver::F8, &k, &k).is_err());
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let same = vec![c([3.0, 4.0], [5.0, 6.0]); 7];
        assert_eq!(solve_f7(&same).unwrap_err(), Error::DegenerateSample);
        let same8 = vec![c([3.0, 4.0], [5.0, 6.0]); 8];
        assert_eq!(solve_f8(&same8).unwrap_err(), Error::DegenerateSample);
    }

    #[test]
    fn homography_recovers_translation() {
        let pts = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0], [3.0, 7.0]];
        let corrs: Vec<_> = pts.iter().map(|p| c(*p, [p[0] + 2.0, p[1] - 1.0])).collect();
        let h = fit_homography(&corrs).unwrap();
        let h = h / h[(2, 2)];
        let expected = Mat3::new(1.0, 0.0, 2.0, 0.0, 1.0, -1.0, 0.0, 0.0, 1.0);
        assert!((h - expected).abs().max() < 1e-9);
    }

    #[test]
    fn solver_names() {
        for s in [Solver::F7, Solver::F8, Solver::E8] {
            assert_eq!(s.name().parse::<Solver>().unwrap(), s);
        }
        assert_eq!(Solver::E8.model_kind(), ModelKind::Essential);
    }
}
