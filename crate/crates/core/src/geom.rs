//! Two-view epipolar geometry.
//!
//! Conventions: a point `X_A` in the frame of camera A maps to camera B as
//! `X_B = R X_A + t`. Fundamental matrices act on homogeneous pixel
//! coordinates as `p̄_Bᵀ F p̄_A = 0`, essential matrices on normalized camera
//! coordinates. Every matrix type is stored in canonical form: unit Frobenius
//! norm and a positive largest-magnitude entry.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Translations shorter than this are treated as a zero baseline.
pub const MIN_BASELINE: f64 = 1e-12;

/// Pinhole intrinsics with zero skew.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::SingularIntrinsics);
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn identity() -> Self {
        Self {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
        }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse(&self) -> Result<Mat3> {
        if !(self.fx.is_finite() && self.fy.is_finite()) || self.fx == 0.0 || self.fy == 0.0 {
            return Err(Error::SingularIntrinsics);
        }
        Ok(Mat3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        ))
    }

    /// Back-projects a pixel to normalized camera coordinates `(x, y, 1)`.
    pub fn normalize(&self, p: [f64; 2]) -> Vec3 {
        Vec3::new((p[0] - self.cx) / self.fx, (p[1] - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point; `None` when it is not in front of the camera.
    pub fn project(&self, x: &Vec3) -> Option<[f64; 2]> {
        if x.z <= 0.0 {
            return None;
        }
        Some([
            self.fx * x.x / x.z + self.cx,
            self.fy * x.y / x.z + self.cy,
        ])
    }
}

/// Rotation and scale-free translation direction from camera A to camera B.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RelativePose {
    /// Validates that `rotation` is a proper rotation within 1e-9.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
        if ortho > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::NotOnManifold("rotation is not orthonormal with det +1"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("translation is not finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64, translation: Vec3) -> Self {
        let rotation = if axis.norm() == 0.0 || angle_rad == 0.0 {
            Mat3::identity()
        } else {
            *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle_rad).matrix()
        };
        Self {
            rotation,
            translation,
        }
    }

    pub fn is_zero_baseline(&self) -> bool {
        self.translation.norm() < MIN_BASELINE
    }

    /// Pose of A relative to B.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl Serialize for RelativePose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRepr {
            r: to_row_major(&self.rotation),
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RelativePose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        RelativePose::new(from_row_major(&repr.r), Vec3::from(repr.t))
            .map_err(serde::de::Error::custom)
    }
}

/// A pixel correspondence between image A and image B.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pa: [f64; 2],
    pub pb: [f64; 2],
}

impl Correspondence {
    pub fn new(pa: [f64; 2], pb: [f64; 2]) -> Self {
        Self { pa, pb }
    }

    pub fn homog_a(&self) -> Vec3 {
        Vec3::new(self.pa[0], self.pa[1], 1.0)
    }

    pub fn homog_b(&self) -> Vec3 {
        Vec3::new(self.pb[0], self.pb[1], 1.0)
    }

    /// The same match with the roles of the images exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pa: self.pb,
            pb: self.pa,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pa.iter().chain(self.pb.iter()).all(|v| v.is_finite())
    }
}

/// Angular pose error in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rot_deg: f64,
    /// `None` when either translation is a zero baseline.
    pub trans_deg: Option<f64>,
}

impl PoseError {
    /// `max(e_R, e_t)`, with an undefined translation error counted as 180°.
    pub fn max_deg(&self) -> f64 {
        self.rot_deg.max(self.trans_deg.unwrap_or(180.0))
    }

    pub fn trans_or_worst(&self) -> f64 {
        self.trans_deg.unwrap_or(180.0)
    }
}

/// An epipolar line `a x + b y + c = 0` with `a² + b² = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Line {
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        self.a * p[0] + self.b * p[1] + self.c
    }

    pub fn distance(&self, p: [f64; 2]) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Normalizes a homogeneous line; `None` when `(a, b)` vanishes.
    pub fn from_homogeneous(l: &Vec3, reference_scale: f64) -> Option<Self> {
        let n = l.x.hypot(l.y);
        if !(n > 1e-14 * reference_scale.max(f64::MIN_POSITIVE)) || !n.is_finite() {
            return None;
        }
        Some(Self {
            a: l.x / n,
            b: l.y / n,
            c: l.z / n,
        })
    }
}

/// Rank-2 fundamental matrix in canonical form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalMatrix(Mat3);

/// Essential matrix with singular values `(σ, σ, 0)` in canonical form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssentialMatrix(Mat3);

impl FundamentalMatrix {
    /// Projects `m` onto rank 2 and canonicalizes it.
    ///
    /// Only the smallest singular component is removed, so a matrix that is
    /// already rank 2 keeps its entries up to rounding of that tiny term;
    /// rebuilding from the full SVD would cost pixel-space accuracy.
    pub fn from_matrix(m: &Mat3) -> Result<Self> {
        let m = canonicalize(m)?;
        let (u, s, v) = svd3(&m)?;
        let projected = m - u.column(2) * v.column(2).transpose() * s[2];
        Ok(Self(canonicalize(&projected)?))
    }

    /// Accepts a matrix already in canonical rank-2 form without altering its bits.
    pub fn try_from_canonical(m: &Mat3) -> Result<Self> {
        let norm = frobenius(m);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotOnManifold("fundamental matrix must have unit norm"));
        }
        let (_, s, _) = svd3(m)?;
        if s[2] > 1e-7 * s[0] {
            return Err(Error::NotOnManifold("fundamental matrix must have rank 2"));
        }
        Ok(Self(*m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// The matrix for the swapped image pair. Canonical form is preserved bit-exactly.
    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        to_row_major(&self.0)
    }

    /// Algebraic epipolar residual `p̄_Bᵀ F p̄_A`.
    pub fn algebraic(&self, c: &Correspondence) -> f64 {
        c.homog_b().dot(&(self.0 * c.homog_a()))
    }
}

impl EssentialMatrix {
    /// Projects `m` onto the essential manifold: singular values become `(σ̄, σ̄, 0)`
    /// with `σ̄` the mean of the two largest, then canonicalizes.
    pub fn from_matrix(m: &Mat3) -> Result<Self> {
        let (u, s, v) = svd3(m)?;
        if s[0] == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let mean = 0.5 * (s[0] + s[1]);
        let projected = u * Mat3::from_diagonal(&Vec3::new(mean, mean, 0.0)) * v.transpose();
        Ok(Self(canonicalize(&projected)?))
    }

    pub fn try_from_canonical(m: &Mat3) -> Result<Self> {
        let norm = frobenius(m);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotOnManifold("essential matrix must have unit norm"));
        }
        let (_, s, _) = svd3(m)?;
        if (s[0] - s[1]).abs() > 1e-6 * s[0] || s[2] > 1e-6 * s[0] {
            return Err(Error::NotOnManifold("essential matrix singular values must be (s, s, 0)"));
        }
        Ok(Self(*m))
    }

    pub fn from_pose(pose: &RelativePose) -> Result<Self> {
        check_baseline(pose)?;
        Self::from_matrix(&(skew(&pose.translation) * pose.rotation))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        to_row_major(&self.0)
    }
}

/// Which two-view model a matrix represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fundamental,
    Essential,
}

/// A hypothesis of either kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Model {
    Fundamental(FundamentalMatrix),
    Essential(EssentialMatrix),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Fundamental(_) => ModelKind::Fundamental,
            Model::Essential(_) => ModelKind::Essential,
        }
    }

    pub fn matrix(&self) -> &Mat3 {
        match self {
            Model::Fundamental(f) => f.matrix(),
            Model::Essential(e) => e.matrix(),
        }
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        to_row_major(self.matrix())
    }

    /// Rebuilds a stored model without altering its bits.
    pub fn from_row_major(kind: ModelKind, v: &[f64; 9]) -> Result<Self> {
        let m = from_row_major(v);
        Ok(match kind {
            ModelKind::Fundamental => Model::Fundamental(FundamentalMatrix::try_from_canonical(&m)?),
            ModelKind::Essential => Model::Essential(EssentialMatrix::try_from_canonical(&m)?),
        })
    }

    /// The pixel-space fundamental matrix used for scoring.
    pub fn to_fundamental(
        &self,
        ka: &CameraIntrinsics,
        kb: &CameraIntrinsics,
    ) -> Result<FundamentalMatrix> {
        match self {
            Model::Fundamental(f) => Ok(*f),
            Model::Essential(e) => essential_to_fundamental(e, ka, kb),
        }
    }

    pub fn to_essential(&self, ka: &CameraIntrinsics, kb: &CameraIntrinsics) -> Result<EssentialMatrix> {
        match self {
            Model::Fundamental(f) => fundamental_to_essential(f, ka, kb),
            Model::Essential(e) => Ok(*e),
        }
    }
}

/// Cross-product matrix `[t]×`.
pub fn skew(t: &Vec3) -> Mat3 {
    Mat3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// Row-major flattening, the on-disk layout of every matrix.
pub fn to_row_major(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

pub fn from_row_major(v: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(v)
}

/// Frobenius norm whose value does not depend on entry order, so `‖M‖ = ‖Mᵀ‖` bit-exactly.
pub fn frobenius(m: &Mat3) -> f64 {
    let mut sq: Vec<f64> = m.iter().map(|v| v * v).collect();
    sq.sort_by(f64::total_cmp);
    sq.iter().sum::<f64>().sqrt()
}

/// Unit Frobenius norm, largest-magnitude entry positive.
pub fn canonicalize(m: &Mat3) -> Result<Mat3> {
    let norm = frobenius(m);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroMatrix);
    }
    let scaled = m / norm;
    let max_pos = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_neg = scaled.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
    Ok(if max_neg > max_pos { -scaled } else { scaled })
}

/// SVD with singular values sorted in decreasing order; returns `(U, s, V)`.
pub fn svd3(m: &Mat3) -> Result<(Mat3, Vec3, Mat3)> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let svd = m.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::InvalidArgument("svd did not converge".into())),
    };
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut us = Mat3::zeros();
    let mut vs = Mat3::zeros();
    let mut ss = Vec3::zeros();
    for (k, &i) in order.iter().enumerate() {
        us.set_column(k, &u.column(i));
        vs.set_column(k, &vt.row(i).transpose());
        ss[k] = s[i];
    }
    Ok((us, ss, vs))
}

fn check_baseline(pose: &RelativePose) -> Result<()> {
    let n = pose.translation.norm();
    if n < MIN_BASELINE {
        return Err(Error::ZeroBaseline(n));
    }
    Ok(())
}

/// Ground-truth fundamental matrix `K_B⁻ᵀ [t]× R K_A⁻¹`.
pub fn compose_fundamental(
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
    pose: &RelativePose,
) -> Result<FundamentalMatrix> {
    check_baseline(pose)?;
    let e = skew(&pose.translation) * pose.rotation;
    let f = kb.inverse()?.transpose() * e * ka.inverse()?;
    FundamentalMatrix::from_matrix(&f)
}

/// `E = K_Bᵀ F K_A`, projected onto the essential manifold.
pub fn fundamental_to_essential(
    f: &FundamentalMatrix,
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
) -> Result<EssentialMatrix> {
    ka.inverse()?;
    kb.inverse()?;
    EssentialMatrix::from_matrix(&(kb.matrix().transpose() * f.matrix() * ka.matrix()))
}

/// `F = K_B⁻ᵀ E K_A⁻¹`.
pub fn essential_to_fundamental(
    e: &EssentialMatrix,
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
) -> Result<FundamentalMatrix> {
    FundamentalMatrix::from_matrix(&(kb.inverse()?.transpose() * e.matrix() * ka.inverse()?))
}

/// Converts a model to the other kind (F→E or E→F).
pub fn convert_fe(model: &Model, ka: &CameraIntrinsics, kb: &CameraIntrinsics) -> Result<Model> {
    Ok(match model {
        Model::Fundamental(f) => Model::Essential(fundamental_to_essential(f, ka, kb)?),
        Model::Essential(e) => Model::Fundamental(essential_to_fundamental(e, ka, kb)?),
    })
}

/// Depths of the midpoint triangulation of rays `a` (camera A) and `b` (camera B).
///
/// Returns `None` for parallel rays.
pub(crate) fn triangulate_depths(pose: &RelativePose, a: &Vec3, b: &Vec3) -> Option<(f64, f64)> {
    // lambda * R a - mu * b = -t
    let u = pose.rotation * a;
    let w = -b;
    let t = &pose.translation;
    let uu = u.dot(&u);
    let ww = w.dot(&w);
    let uw = u.dot(&w);
    let det = uu * ww - uw * uw;
    if det.abs() <= 1e-14 * uu * ww {
        return None;
    }
    let ru = -u.dot(t);
    let rw = -w.dot(t);
    let lambda = (ru * ww - uw * rw) / det;
    let mu = (uu * rw - uw * ru) / det;
    Some((lambda * a.z, mu * b.z))
}

/// The four `(R, ±t)` factorizations of an essential matrix, in a fixed order.
pub fn essential_candidates(e: &EssentialMatrix) -> Result<[RelativePose; 4]> {
    let (mut u, _, mut v) = svd3(e.matrix())?;
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v.determinant() < 0.0 {
        v = -v;
    }
    let w = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v.transpose();
    let r2 = u * w.transpose() * v.transpose();
    let t = u.column(2).into_owned().normalize();
    Ok([
        RelativePose { rotation: r1, translation: t },
        RelativePose { rotation: r1, translation: -t },
        RelativePose { rotation: r2, translation: t },
        RelativePose { rotation: r2, translation: -t },
    ])
}

/// Recovers `(R, t̂)` from an essential matrix by cheirality voting.
///
/// Also returns the number of correspondences in front of both cameras.
pub fn decompose_essential_with_support(
    e: &EssentialMatrix,
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
) -> Result<(RelativePose, usize)> {
    if corrs.is_empty() {
        return Err(Error::NotEnoughCorrespondences { needed: 1, got: 0 });
    }
    let rays: Vec<(Vec3, Vec3)> = corrs
        .iter()
        .map(|c| (ka.normalize(c.pa), kb.normalize(c.pb)))
        .collect();
    let mut best: Option<(RelativePose, usize)> = None;
    for cand in essential_candidates(e)? {
        let count = rays
            .iter()
            .filter(|(a, b)| matches!(triangulate_depths(&cand, a, b), Some((za, zb)) if za > 0.0 && zb > 0.0))
            .count();
        if best.as_ref().map_or(true, |(_, c)| count > *c) {
            best = Some((cand, count));
        }
    }
    match best {
        Some((pose, count)) if count > 0 => Ok((pose, count)),
        _ => Err(Error::Undecidable),
    }
}

pub fn decompose_essential(
    e: &EssentialMatrix,
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
) -> Result<RelativePose> {
    decompose_essential_with_support(e, corrs, ka, kb).map(|(p, _)| p)
}

/// Decomposes a model of either kind into a pose.
pub fn model_pose(
    model: &Model,
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
) -> Result<RelativePose> {
    decompose_essential(&model.to_essential(ka, kb)?, corrs, ka, kb)
}

/// Angle of `R_aᵀ R_b` in degrees.
///
/// Evaluated as `atan2(sin θ, cos θ)`, with `cos θ = (tr − 1)/2` clamped and
/// `sin θ` from the skew part; this equals the arccos form but keeps full
/// precision near 0°.
pub fn rotation_angle_deg(ra: &Mat3, rb: &Mat3) -> f64 {
    let rel = ra.transpose() * rb;
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin = 0.5
        * Vec3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]).norm();
    sin.atan2(cos).to_degrees()
}

/// Angle between two directions in degrees; `None` if either is shorter than 1e-12.
pub fn direction_angle_deg(a: &Vec3, b: &Vec3) -> Option<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na < MIN_BASELINE || nb < MIN_BASELINE {
        return None;
    }
    Some(a.cross(b).norm().atan2(a.dot(b)).to_degrees())
}

/// Sign-sensitive angular pose error.
pub fn pose_error(est: &RelativePose, gt: &RelativePose) -> PoseError {
    pose_error_with(est, gt, false)
}

/// Angular pose error; with `sign_agnostic`, `t` and `-t` are considered equal.
pub fn pose_error_with(est: &RelativePose, gt: &RelativePose, sign_agnostic: bool) -> PoseError {
    let rot_deg = rotation_angle_deg(&est.rotation, &gt.rotation);
    let trans_deg = direction_angle_deg(&est.translation, &gt.translation).map(|a| {
        if sign_agnostic {
            a.min(180.0 - a)
        } else {
            a
        }
    });
    PoseError { rot_deg, trans_deg }
}

/// Epipolar line `F p̄_A` in image B; `None` when `p_A` is the epipole.
pub fn epipolar_line(f: &FundamentalMatrix, pa: [f64; 2]) -> Option<Line> {
    line_through(f.matrix(), pa)
}

/// Epipolar line `Fᵀ p̄_B` in image A.
pub fn epipolar_line_in_a(f: &FundamentalMatrix, pb: [f64; 2]) -> Option<Line> {
    line_through(&f.matrix().transpose(), pb)
}

/// Normalized line `m p̄` for an arbitrary bilinear form `m`.
pub fn line_through(m: &Mat3, p: [f64; 2]) -> Option<Line> {
    let ph = Vec3::new(p[0], p[1], 1.0);
    let l = m * ph;
    let scale = frobenius(m) * ph.norm();
    Line::from_homogeneous(&l, scale)
}

/// Conjugates F for coordinates scaled by `s_a` in image A and `s_b` in image B:
/// `F' = S_B⁻ᵀ F S_A⁻¹` with `S = diag(s, s, 1)`.
pub fn rescale_fundamental(f: &FundamentalMatrix, s_a: f64, s_b: f64) -> Result<FundamentalMatrix> {
    Ok(FundamentalMatrix(canonicalize(&rescale_matrix(f.matrix(), s_a, s_b)?)?))
}

/// Un-normalized similarity conjugation used by [`rescale_fundamental`].
pub fn rescale_matrix(m: &Mat3, s_a: f64, s_b: f64) -> Result<Mat3> {
    for s in [s_a, s_b] {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidScale(s));
        }
    }
    let da = [1.0 / s_a, 1.0 / s_a, 1.0];
    let db = [1.0 / s_b, 1.0 / s_b, 1.0];
    Ok(Mat3::from_fn(|r, c| m[(r, c)] * db[r] * da[c]))
}
