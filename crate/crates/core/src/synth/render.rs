//! Grayscale rendering of a scene by per-plane homography warps.

use serde::{Deserialize, Serialize};

use super::scene::{Plane, SyntheticScene, View};
use crate::geom::{Mat3, Vec3};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Binary PGM, handy for eyeballing scenes.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }
}

fn hash2(seed: u64, x: i64, y: i64) -> f64 {
    let mut h = seed ^ (x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Lattice value noise in `[0, 1]`.
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (smooth(x - x0), smooth(y - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v00 = hash2(seed, ix, iy);
    let v10 = hash2(seed, ix + 1, iy);
    let v01 = hash2(seed, ix, iy + 1);
    let v11 = hash2(seed, ix + 1, iy + 1);
    let top = v00 + (v10 - v00) * fx;
    let bottom = v01 + (v11 - v01) * fx;
    top + (bottom - top) * fy
}

/// Three-octave value-noise texture of a plane at plane coordinates `uv` (meters).
pub fn texture(plane: &Plane, uv: [f64; 2]) -> f64 {
    let lum = 0.299 * plane.base_color[0] + 0.587 * plane.base_color[1] + 0.114 * plane.base_color[2];
    let mut acc = 0.0;
    let mut amp = 0.5;
    let mut freq = 1.0 / plane.texture_scale;
    for octave in 0..3u64 {
        let seed = plane.texture_seed.wrapping_add(octave.wrapping_mul(0x632b_e59b_d9b4_e019));
        acc += amp * value_noise(seed, uv[0] * freq, uv[1] * freq);
        amp *= 0.5;
        freq *= 2.0;
    }
    // acc is in [0, 0.875]
    (lum * (0.3 + 0.7 * acc / 0.875)).clamp(0.0, 1.0)
}

/// Maps pixel (homogeneous) to the plane point `origin + a·u + b·v` (up to scale),
/// together with the per-pixel depth: `[a, b, 1]ᵀ ∝ H p`.
struct PlaneWarp {
    h: Mat3,
    /// Depth of the hit is `1 / (n_row · p)`.
    inv_depth: Vec3,
}

fn plane_warp(scene: &SyntheticScene, view: View, plane: &Plane) -> Option<PlaneWarp> {
    // Plane-to-camera homography G maps [a, b, 1] to the camera-frame point.
    let (rot, trans) = match view {
        View::A => (Mat3::identity(), Vec3::zeros()),
        View::B => (scene.gt_pose.rotation, scene.gt_pose.translation),
    };
    let u = rot * Vec3::from(plane.u);
    let v = rot * Vec3::from(plane.v);
    let o = rot * Vec3::from(plane.origin) + trans;
    let g = Mat3::from_columns(&[u, v, o]);
    let k = scene.intrinsics(view).matrix();
    let h = (k * g).try_inverse()?;
    // depth along the pixel ray: X = s K⁻¹ p with n·X = n·o
    let n = u.cross(&v);
    let d = n.dot(&o);
    if d.abs() < 1e-12 {
        return None;
    }
    let k_inv = k.try_inverse()?;
    let inv_depth = k_inv.transpose() * n / d;
    Some(PlaneWarp { h, inv_depth })
}

/// Renders one view; pixels without any surface are black.
pub fn render(scene: &SyntheticScene, view: View) -> Image {
    let (w, h) = (scene.width, scene.height);
    let mut img = Image::new(w, h);
    let mut zbuf = vec![f64::INFINITY; w * h];
    for plane in &scene.planes {
        let Some(warp) = plane_warp(scene, view, plane) else {
            continue;
        };
        for y in 0..h {
            for x in 0..w {
                let p = Vec3::new(x as f64, y as f64, 1.0);
                let inv_s = warp.inv_depth.dot(&p);
                if !(inv_s > 0.0) {
                    continue;
                }
                let s = 1.0 / inv_s;
                let i = y * w + x;
                if s >= zbuf[i] {
                    continue;
                }
                let q = warp.h * p;
                if q.z.abs() < 1e-15 {
                    continue;
                }
                let (a, b) = (q.x / q.z, q.y / q.z);
                if a.abs() > plane.half_extent[0] || b.abs() > plane.half_extent[1] {
                    continue;
                }
                zbuf[i] = s;
                img.data[i] = texture(plane, [a, b]);
            }
        }
    }
    img
}

/// Both views of a scene.
pub fn render_pair(scene: &SyntheticScene) -> (Image, Image) {
    (render(scene, View::A), render(scene, View::B))
}
