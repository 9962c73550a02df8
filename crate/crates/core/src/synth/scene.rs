//! Multi-plane scenes seen by two calibrated cameras.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    compose_fundamental, CameraIntrinsics, EssentialMatrix, FundamentalMatrix, Mat3, Model, ModelKind,
    RelativePose, Vec3,
};
use crate::rng;

/// A textured rectangle `origin + a·u + b·v`, `|a| ≤ half_extent[0]`,
/// `|b| ≤ half_extent[1]`, expressed in the frame of camera A (meters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub origin: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
    pub half_extent: [f64; 2],
    pub texture_seed: u64,
    /// Texture feature size in meters.
    pub texture_scale: f64,
    pub base_color: [f64; 3],
}

impl Plane {
    pub fn normal(&self) -> Vec3 {
        Vec3::from(self.u).cross(&Vec3::from(self.v))
    }

    /// Ray parameter, plane coordinates of the hit, or `None` when missed.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, [f64; 2])> {
        let n = self.normal();
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let o = Vec3::from(self.origin);
        let s = n.dot(&(o - origin)) / denom;
        if !(s > 0.0) {
            return None;
        }
        let rel = origin + dir * s - o;
        let a = rel.dot(&Vec3::from(self.u));
        let b = rel.dot(&Vec3::from(self.v));
        if a.abs() <= self.half_extent[0] && b.abs() <= self.half_extent[1] {
            Some((s, [a, b]))
        } else {
            None
        }
    }
}

/// Camera and placement settings shared by every generated scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub max_rotation_deg: f64,
    /// Camera-B center distance from camera A, meters.
    pub baseline: (f64, f64),
    pub planes: (usize, usize),
    /// Depth range of foreground planes, meters.
    pub depth: (f64, f64),
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            focal: 525.0,
            max_rotation_deg: 45.0,
            baseline: (0.5, 2.5),
            planes: (3, 8),
            depth: (3.0, 8.0),
            max_attempts: 1000,
        }
    }
}

impl SceneConfig {
    /// Square images of `size` pixels with a 60° field of view.
    pub fn square(size: usize) -> Self {
        Self {
            width: size,
            height: size,
            focal: size as f64 / (2.0 * 30f64.to_radians().tan()),
            ..Self::default()
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
        }
    }
}

/// Experimental controls for one image pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub noise_px: f64,
    pub outlier_rate: f64,
    pub n_corrs: usize,
    pub overlap_band: (f64, f64),
}

impl Default for PairSpec {
    fn default() -> Self {
        Self {
            noise_px: 1.0,
            outlier_rate: 0.3,
            n_corrs: 200,
            overlap_band: (0.10, 0.40),
        }
    }
}

impl PairSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.noise_px.is_finite()
            && self.noise_px >= 0.0
            && (0.0..1.0).contains(&self.outlier_rate)
            && self.overlap_band.0.is_finite()
            && self.overlap_band.1.is_finite()
            && self.overlap_band.0 <= self.overlap_band.1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid pair spec {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub planes: Vec<Plane>,
    pub ka: CameraIntrinsics,
    pub kb: CameraIntrinsics,
    pub gt_pose: RelativePose,
    pub overlap: f64,
    pub width: usize,
    pub height: usize,
}

/// Which camera of the pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    A,
    B,
}

/// Grid resolution of the overlap estimate.
pub const OVERLAP_GRID: usize = 32;
/// Relative depth tolerance for co-visibility.
pub const DEPTH_TOLERANCE: f64 = 0.01;

impl SyntheticScene {
    pub fn intrinsics(&self, view: View) -> &CameraIntrinsics {
        match view {
            View::A => &self.ka,
            View::B => &self.kb,
        }
    }

    /// Camera center and ray direction (camera-A frame) through a pixel; the
    /// direction has unit depth in the viewing camera.
    pub fn ray(&self, view: View, p: [f64; 2]) -> (Vec3, Vec3) {
        match view {
            View::A => (Vec3::zeros(), self.ka.normalize(p)),
            View::B => {
                let rt = self.gt_pose.rotation.transpose();
                (-(rt * self.gt_pose.translation), rt * self.kb.normalize(p))
            }
        }
    }

    /// Nearest surface along a pixel ray: `(depth in that camera, plane index, plane coords)`.
    pub fn cast(&self, view: View, p: [f64; 2]) -> Option<(f64, usize, [f64; 2])> {
        let (o, d) = self.ray(view, p);
        let mut best: Option<(f64, usize, [f64; 2])> = None;
        for (i, plane) in self.planes.iter().enumerate() {
            if let Some((s, uv)) = plane.intersect(&o, &d) {
                if best.map_or(true, |(bs, _, _)| s < bs) {
                    best = Some((s, i, uv));
                }
            }
        }
        best
    }

    pub fn gt_fundamental(&self) -> Result<FundamentalMatrix> {
        compose_fundamental(&self.ka, &self.kb, &self.gt_pose)
    }

    pub fn gt_essential(&self) -> Result<EssentialMatrix> {
        EssentialMatrix::from_pose(&self.gt_pose)
    }

    /// Ground-truth hypothesis of the requested kind.
    pub fn gt_model(&self, kind: ModelKind) -> Result<Model> {
        Ok(match kind {
            ModelKind::Fundamental => Model::Fundamental(self.gt_fundamental()?),
            ModelKind::Essential => Model::Essential(self.gt_essential()?),
        })
    }

    pub fn in_bounds(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (self.width - 1) as f64 && p[1] <= (self.height - 1) as f64
    }

    /// Projection into B of the visible surface point under pixel `pa` of A,
    /// when that point is also visible (unoccluded, in frame) in B.
    pub fn covisible(&self, pa: [f64; 2]) -> Option<[f64; 2]> {
        let (depth_a, _, _) = self.cast(View::A, pa)?;
        let x_a = self.ka.normalize(pa) * depth_a;
        let x_b = self.gt_pose.transform(&x_a);
        let pb = self.kb.project(&x_b)?;
        if !self.in_bounds(pb) {
            return None;
        }
        let (depth_b, _, _) = self.cast(View::B, pb)?;
        if (depth_b - x_b.z).abs() <= DEPTH_TOLERANCE * x_b.z {
            Some(pb)
        } else {
            None
        }
    }

    /// Fraction of a 32×32 grid over image A that is co-visible in B.
    pub fn compute_overlap(&self) -> f64 {
        let mut hits = 0usize;
        for j in 0..OVERLAP_GRID {
            for i in 0..OVERLAP_GRID {
                let p = [
                    (i as f64 + 0.5) * (self.width - 1) as f64 / OVERLAP_GRID as f64,
                    (j as f64 + 0.5) * (self.height - 1) as f64 / OVERLAP_GRID as f64,
                ];
                if self.covisible(p).is_some() {
                    hits += 1;
                }
            }
        }
        hits as f64 / (OVERLAP_GRID * OVERLAP_GRID) as f64
    }
}

fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Orthonormal in-plane axes for a plane facing the camera within `max_tilt` radians.
fn facing_axes<R: Rng>(rng: &mut R, max_tilt: f64) -> (Vec3, Vec3) {
    let tilt = rng.gen_range(0.0..max_tilt);
    let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
    let normal = Vec3::new(tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), -tilt.cos());
    let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = helper.cross(&normal).normalize();
    let spin = rng.gen_range(0.0..std::f64::consts::TAU);
    let v0 = normal.cross(&u);
    let u2 = u * spin.cos() + v0 * spin.sin();
    let v2 = normal.cross(&u2);
    // u × v = normal
    (u2, v2)
}

fn random_color<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0)]
}

fn sample_planes<R: Rng>(rng: &mut R, config: &SceneConfig, ka: &CameraIntrinsics) -> Vec<Plane> {
    let n = rng.gen_range(config.planes.0..=config.planes.1.max(config.planes.0));
    let half_fov = ((config.width.max(config.height) as f64) / (2.0 * config.focal)).atan();
    let mut planes = Vec::with_capacity(n);

    // background wall covering the whole view of A
    let depth = config.depth.1 * rng.gen_range(1.2..1.6);
    let (u, v) = facing_axes(rng, 20f64.to_radians());
    let reach = depth * half_fov.tan() * 4.0 + depth;
    planes.push(Plane {
        origin: [0.0, 0.0, depth],
        u: u.into(),
        v: v.into(),
        half_extent: [reach, reach],
        texture_seed: rng.gen(),
        texture_scale: rng.gen_range(0.25..0.6) * depth / 6.0,
        base_color: random_color(rng),
    });

    for _ in 1..n {
        let p = [
            rng.gen_range(0.0..(config.width - 1) as f64),
            rng.gen_range(0.0..(config.height - 1) as f64),
        ];
        let depth = rng.gen_range(config.depth.0..config.depth.1);
        let center = ka.normalize(p) * depth;
        let (u, v) = facing_axes(rng, 55f64.to_radians());
        let size = depth * half_fov.tan();
        planes.push(Plane {
            origin: center.into(),
            u: u.into(),
            v: v.into(),
            half_extent: [rng.gen_range(0.15..0.6) * size, rng.gen_range(0.15..0.6) * size],
            texture_seed: rng.gen(),
            texture_scale: rng.gen_range(0.2..0.5) * depth / 5.0,
            base_color: random_color(rng),
        });
    }
    planes
}

fn sample_pose<R: Rng>(rng: &mut R, config: &SceneConfig, look_at: &Vec3) -> RelativePose {
    let baseline = rng.gen_range(config.baseline.0..=config.baseline.1);
    let center_b = random_unit(rng) * baseline;
    // aim roughly at the scene, then perturb within the rotation budget
    let forward = (look_at - center_b).normalize();
    let helper = if forward.y.abs() < 0.9 { Vec3::y() } else { Vec3::x() };
    let right = helper.cross(&forward).normalize();
    let down = forward.cross(&right);
    let aim = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let jitter = crate::geom::RelativePose::from_axis_angle(
        random_unit(rng),
        rng.gen_range(0.0..0.25) * config.max_rotation_deg.to_radians(),
        Vec3::zeros(),
    )
    .rotation;
    let mut rotation = jitter * aim;
    // keep the total rotation within the budget
    let angle = crate::geom::rotation_angle_deg(&Mat3::identity(), &rotation);
    if angle > config.max_rotation_deg {
        let axis_angle = nalgebra::Rotation3::from_matrix_unchecked(rotation).scaled_axis();
        let scaled = axis_angle * (config.max_rotation_deg / angle) * rng.gen_range(0.5..1.0);
        rotation = *nalgebra::Rotation3::from_scaled_axis(scaled).matrix();
    }
    RelativePose {
        rotation,
        translation: -(rotation * center_b),
    }
}

/// Samples a scene whose A→B overlap lies in `spec.overlap_band`.
pub fn generate_scene(spec: &PairSpec, config: &SceneConfig, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    if !(config.baseline.1 > 0.0) {
        return Err(Error::ZeroBaseline(config.baseline.1.max(0.0)));
    }
    if config.baseline.0 < 0.0 || config.baseline.0 > config.baseline.1 {
        return Err(Error::InvalidArgument("invalid baseline range".into()));
    }
    let ka = config.intrinsics();
    let kb = ka;
    let mut rng = rng::stream(seed, 0, "scene");
    for _attempt in 0..config.max_attempts {
        let planes = sample_planes(&mut rng, config, &ka);
        let look_at = Vec3::new(0.0, 0.0, rng.gen_range(config.depth.0..config.depth.1));
        let gt_pose = sample_pose(&mut rng, config, &look_at);
        if gt_pose.is_zero_baseline() {
            continue;
        }
        let mut scene = SyntheticScene {
            planes,
            ka,
            kb,
            gt_pose,
            overlap: 0.0,
            width: config.width,
            height: config.height,
        };
        let overlap = scene.compute_overlap();
        if overlap >= spec.overlap_band.0 && overlap <= spec.overlap_band.1 && overlap > 0.0 {
            scene.overlap = overlap;
            return Ok(scene);
        }
    }
    Err(Error::SceneGeneration(format!(
        "overlap band {:?} not reached in {} attempts",
        spec.overlap_band, config.max_attempts
    )))
}
