use epi_core::criteria::sampson_raw;
use epi_core::geom::{Correspondence, Vec3};
use epi_core::synth::{
    dense_gt, generate_scene, render_pair, sample_correspondences, PairSpec, SceneConfig, SyntheticScene, View,
};

fn scene(seed: u64) -> SyntheticScene {
    generate_scene(&PairSpec::default(), &SceneConfig::default(), seed).unwrap()
}

/// Independent visibility: nearest hit by brute-force ray marching of every plane.
fn brute_visible(scene: &SyntheticScene, origin: Vec3, dir: Vec3) -> Option<(f64, Vec3)> {
    let mut best: Option<(f64, Vec3)> = None;
    for p in &scene.planes {
        let n = Vec3::from(p.u).cross(&Vec3::from(p.v));
        let o = Vec3::from(p.origin);
        let s = n.dot(&(o - origin)) / n.dot(&dir);
        if !(s > 0.0) || !s.is_finite() {
            continue;
        }
        let x = origin + dir * s;
        let rel = x - o;
        let inside = rel.dot(&Vec3::from(p.u)).abs() <= p.half_extent[0]
            && rel.dot(&Vec3::from(p.v)).abs() <= p.half_extent[1];
        if inside && best.map_or(true, |(bs, _)| s < bs) {
            best = Some((s, x));
        }
    }
    best
}

fn brute_covisible(scene: &SyntheticScene, pa: [f64; 2]) -> Option<[f64; 2]> {
    let k = &scene.ka;
    let dir = Vec3::new((pa[0] - k.cx) / k.fx, (pa[1] - k.cy) / k.fy, 1.0);
    let (_, x) = brute_visible(scene, Vec3::zeros(), dir)?;
    let xb = scene.gt_pose.rotation * x + scene.gt_pose.translation;
    if xb.z <= 0.0 {
        return None;
    }
    let kb = &scene.kb;
    let pb = [kb.fx * xb.x / xb.z + kb.cx, kb.fy * xb.y / xb.z + kb.cy];
    let (w, h) = ((scene.width - 1) as f64, (scene.height - 1) as f64);
    if pb[0] < 0.0 || pb[1] < 0.0 || pb[0] > w || pb[1] > h {
        return None;
    }
    let center_b = -(scene.gt_pose.rotation.transpose() * scene.gt_pose.translation);
    let (_, hit) = brute_visible(scene, center_b, x - center_b)?;
    let depth_b = (scene.gt_pose.rotation * hit + scene.gt_pose.translation).z;
    ((depth_b - xb.z).abs() <= 0.01 * xb.z).then_some(pb)
}

#[test]
fn identical_seed_gives_identical_scene_and_images() {
    let a = scene(11);
    let b = scene(11);
    assert_eq!(a, b);
    let (ia, ib) = render_pair(&a);
    let (ja, jb) = render_pair(&b);
    assert!(ia.data.iter().zip(&ja.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(ib.data.iter().zip(&jb.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(scene(12), a);
}

#[test]
fn zero_baseline_request_is_rejected() {
    let config = SceneConfig {
        baseline: (0.0, 0.0),
        ..SceneConfig::default()
    };
    let spec = PairSpec {
        overlap_band: (1.0, 1.0),
        ..PairSpec::default()
    };
    assert!(generate_scene(&spec, &config, 0).is_err());
}

#[test]
fn overlap_matches_brute_force_visibility() {
    for seed in 0..20 {
        let s = scene(seed);
        let spec = PairSpec::default();
        let mut hits = 0;
        for j in 0..32 {
            for i in 0..32 {
                let p = [
                    (i as f64 + 0.5) * (s.width - 1) as f64 / 32.0,
                    (j as f64 + 0.5) * (s.height - 1) as f64 / 32.0,
                ];
                if brute_covisible(&s, p).is_some() {
                    hits += 1;
                }
            }
        }
        let overlap = hits as f64 / 1024.0;
        assert_eq!(overlap, s.overlap, "seed {seed}");
        assert!(overlap >= spec.overlap_band.0 && overlap <= spec.overlap_band.1);
    }
}

#[test]
fn rendered_pixels_have_positive_depth_and_texture() {
    let s = scene(3);
    let (a, b) = render_pair(&s);
    for img in [&a, &b] {
        let lit = img.data.iter().filter(|v| **v > 0.0).count();
        assert!(lit > img.data.len() / 4);
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    // every lit pixel of A has a positive depth surface behind it
    for y in (0..s.height).step_by(7) {
        for x in (0..s.width).step_by(7) {
            if a.get(x, y) > 0.0 {
                let (depth, _, _) = s.cast(View::A, [x as f64, y as f64]).unwrap();
                assert!(depth > 0.0);
            }
        }
    }
}

#[test]
fn noiseless_correspondences_satisfy_gt() {
    let s = scene(5);
    let spec = PairSpec {
        noise_px: 0.0,
        outlier_rate: 0.0,
        ..PairSpec::default()
    };
    let out = sample_correspondences(&s, &spec, 1).unwrap();
    assert_eq!(out.correspondences.len(), spec.n_corrs);
    let f = *s.gt_fundamental().unwrap().matrix();
    let worst = out.correspondences.iter().map(|c| sampson_raw(&f, c).unwrap().sqrt()).fold(0.0, f64::max);
    assert!(worst < 1e-9, "worst {worst:e}");
}

#[test]
fn outlier_count_is_exact() {
    let s = scene(6);
    let spec = PairSpec {
        outlier_rate: 0.5,
        n_corrs: 200,
        ..PairSpec::default()
    };
    let out = sample_correspondences(&s, &spec, 2).unwrap();
    assert_eq!(out.inlier_mask.iter().filter(|m| **m).count(), 100);
}

#[test]
fn noisy_sampson_residual_matches_monte_carlo_expectation() {
    // Monte-Carlo expectation of the Sampson distance for isotropic 1 px noise
    // on both images at the same exact correspondences.
    let s = scene(7);
    let exact = sample_correspondences(
        &s,
        &PairSpec {
            noise_px: 0.0,
            outlier_rate: 0.0,
            n_corrs: 200,
            ..PairSpec::default()
        },
        9,
    )
    .unwrap();
    let f = *s.gt_fundamental().unwrap().matrix();
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut mc = Vec::new();
    for c in &exact.correspondences {
        for _ in 0..200 {
            let mut d = *c;
            d.pa[0] += normal.sample(&mut rng);
            d.pa[1] += normal.sample(&mut rng);
            d.pb[0] += normal.sample(&mut rng);
            d.pb[1] += normal.sample(&mut rng);
            mc.push(sampson_raw(&f, &d).unwrap());
        }
    }
    let expected = mc.iter().sum::<f64>() / mc.len() as f64;

    let noisy = sample_correspondences(
        &s,
        &PairSpec {
            noise_px: 1.0,
            outlier_rate: 0.0,
            n_corrs: 2000,
            ..PairSpec::default()
        },
        10,
    )
    .unwrap();
    let r: Vec<f64> = noisy.correspondences.iter().map(|c| sampson_raw(&f, c).unwrap()).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
    let se = (var / r.len() as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected} se {se}");
}

#[test]
fn dense_gt_is_exact_and_scales_with_grid() {
    for seed in 0..5 {
        let s = scene(seed);
        let f = *s.gt_fundamental().unwrap().matrix();
        let coarse = dense_gt(&s, 16.0).unwrap();
        let fine = dense_gt(&s, 8.0).unwrap();
        for c in coarse.iter().chain(&fine) {
            assert!(sampson_raw(&f, c).unwrap().sqrt() < 1e-9);
        }
        let ratio = fine.len() as f64 / coarse.len() as f64;
        assert!((ratio - 4.0).abs() <= 0.8, "seed {seed} ratio {ratio}");
    }
}

#[test]
fn dense_gt_matches_ray_casting_oracle() {
    let s = scene(8);
    let dense = dense_gt(&s, 10.0).unwrap();
    let mut checked = 0;
    for c in &dense {
        let pb = brute_covisible(&s, c.pa).expect("oracle agrees on visibility");
        assert!((pb[0] - c.pb[0]).abs() < 1e-6 && (pb[1] - c.pb[1]).abs() < 1e-6);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn correspondences_are_finite() {
    let s = scene(2);
    let out = sample_correspondences(&s, &PairSpec::default(), 0).unwrap();
    assert!(out.correspondences.iter().all(Correspondence::is_finite));
}
