#![allow(dead_code)]

use epi_core::geom::{CameraIntrinsics, Correspondence, RelativePose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vga() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap()
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() < 1.0 {
            return v.normalize();
        }
    }
}

/// Rotation up to 30°, translation with a sizeable baseline.
pub fn random_pose(rng: &mut impl Rng) -> RelativePose {
    let axis = random_unit(rng);
    let angle = rng.gen_range(0.0..30f64.to_radians());
    let t = random_unit(rng) * rng.gen_range(0.5..2.0);
    RelativePose::from_axis_angle(axis, angle, t)
}

/// Noiseless correspondences of random points in front of both cameras.
pub fn project_points(
    rng: &mut impl Rng,
    pose: &RelativePose,
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
    n: usize,
) -> Vec<Correspondence> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(4.0..10.0));
        let xb = pose.transform(&x);
        if xb.z < 0.5 {
            continue;
        }
        let (Some(pa), Some(pb)) = (ka.project(&x), kb.project(&xb)) else {
            continue;
        };
        out.push(Correspondence::new(pa, pb));
    }
    out
}

/// Nelder-Mead on a 2-D function.
pub fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: f64, iters: usize) -> ([f64; 2], f64) {
    let mut s = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut v = s.map(&f);
    for _ in 0..iters {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        s = idx.map(|i| s[i]);
        v = idx.map(|i| v[i]);
        let c = [(s[0][0] + s[1][0]) / 2.0, (s[0][1] + s[1][1]) / 2.0];
        let at = |k: f64| [c[0] + k * (s[2][0] - c[0]), c[1] + k * (s[2][1] - c[1])];
        let r = at(-1.0);
        let fr = f(r);
        if fr < v[0] {
            let e = at(-2.0);
            let fe = f(e);
            if fe < fr {
                s[2] = e;
                v[2] = fe;
            } else {
                s[2] = r;
                v[2] = fr;
            }
        } else if fr < v[1] {
            s[2] = r;
            v[2] = fr;
        } else {
            let k = at(0.5);
            let fk = f(k);
            if fk < v[2] {
                s[2] = k;
                v[2] = fk;
            } else {
                for i in 1..3 {
                    s[i] = [(s[0][0] + s[i][0]) / 2.0, (s[0][1] + s[i][1]) / 2.0];
                    v[i] = f(s[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    (s[best], v[best])
}
