mod common;

use std::collections::BTreeMap;

use common::{random_unit, rng};
use epi_core::eval::*;
use epi_core::geom::*;
use epi_core::metrics::maa;
use epi_core::robust::*;
use epi_core::synth::{generate_scene, sample_correspondences, PairSpec, SceneConfig, SyntheticScene};
use rand::Rng;

struct Fixture {
    scene: SyntheticScene,
    corrs: Vec<Correspondence>,
    pool: HypothesisPool,
}

fn fixture(seed: u64, n_corrs: usize) -> Fixture {
    let spec = PairSpec {
        n_corrs,
        ..PairSpec::default()
    };
    let scene = generate_scene(&spec, &SceneConfig::default(), seed).unwrap();
    let corrs = sample_correspondences(&scene, &spec, seed).unwrap().correspondences;
    let mut pool = generate_pool(&corrs, 60, Solver::F7, seed, &scene.ka, &scene.kb).unwrap();
    pool.replace((seed as usize * 7) % 60, scene.gt_model(ModelKind::Fundamental).unwrap()).unwrap();
    Fixture { scene, corrs, pool }
}

fn eval_pair(f: &Fixture, id: u64) -> EvalPair<'_> {
    EvalPair {
        pair_id: id,
        ka: f.scene.ka,
        kb: f.scene.kb,
        gt_pose: f.scene.gt_pose,
        corrs: &f.corrs,
        pool: &f.pool,
    }
}

fn oracle_pose_scores(f: &Fixture) -> Vec<f64> {
    pool_errors(&f.pool, &f.corrs, &f.scene.ka, &f.scene.kb, &f.scene.gt_pose)
        .iter()
        .map(|e| -e.max_deg())
        .collect()
}

fn msac_scores(f: &Fixture) -> Vec<f64> {
    score_pool(&f.pool, &f.corrs, &f.scene.ka, &f.scene.kb, Method::Msac, 1.0)
        .unwrap()
        .iter()
        .map(|r| r.value)
        .collect()
}

fn parse_rows(csv: &str) -> Vec<(String, f64, Option<f64>)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            let e_t = if cols[4].is_empty() { None } else { Some(cols[4].parse().unwrap()) };
            (cols[1].to_string(), cols[3].parse().unwrap(), e_t)
        })
        .collect()
}

/// Straight enumeration of thresholds 1..=max; hits are counted as integers
/// and divided once so the ratio is correctly rounded.
fn brute_maa(errors: &[f64], max: u32) -> f64 {
    let mut hits = 0u64;
    for t in 1..=max {
        for e in errors {
            if *e <= t as f64 {
                hits += 1;
            }
        }
    }
    hits as f64 / (max as u64 * errors.len() as u64) as f64
}

#[test]
fn oracle_pose_on_guaranteed_pools_is_always_good() {
    let fixtures: Vec<Fixture> = (0..8).map(|s| fixture(s, 80 + 10 * s as usize)).collect();
    let pairs: Vec<EvalPair> = fixtures.iter().enumerate().map(|(i, f)| eval_pair(f, i as u64)).collect();
    let mut oracle = ScorerScores {
        name: "oracle-pose".into(),
        ..Default::default()
    };
    let mut base = ScorerScores {
        name: "msac".into(),
        ..Default::default()
    };
    for (i, f) in fixtures.iter().enumerate() {
        oracle.by_pair.insert(i as u64, oracle_pose_scores(f));
        base.by_pair.insert(i as u64, msac_scores(f));
    }
    let report = evaluate(&pairs, &[base, oracle], &EvalConfig::default()).unwrap();
    let s = report.summary("oracle-pose").unwrap();
    assert_eq!(s.failures.counts[&FailureClass::SelectedGood], 8);
    assert_eq!(s.failures.fractions[&FailureClass::SelectedGood], 1.0);
    for summary in &report.summaries {
        assert_eq!(summary.failures.fraction_sum(), 1.0);
        assert!((0.0..=1.0).contains(&summary.overall.maa_max));
    }
    // low split has 80 and 90 correspondences
    assert_eq!(s.splits["0-100"].n_pairs, 2);
    assert_eq!(s.splits["100-inf"].n_pairs, 6);

    // recompute every mAA from the emitted CSV
    let mut buf = Vec::new();
    report.write_rows_csv(&mut buf).unwrap();
    let rows = parse_rows(&String::from_utf8(buf).unwrap());
    let mut by_scorer: BTreeMap<String, Vec<(f64, Option<f64>)>> = BTreeMap::new();
    for (name, r, t) in rows {
        by_scorer.entry(name).or_default().push((r, t));
    }
    for summary in &report.summaries {
        let col = &by_scorer[&summary.scorer];
        let r: Vec<f64> = col.iter().map(|x| x.0).collect();
        let t: Vec<f64> = col.iter().map(|x| x.1.unwrap_or(f64::INFINITY)).collect();
        let m: Vec<f64> = col.iter().map(|x| x.0.max(x.1.unwrap_or(f64::INFINITY))).collect();
        assert_eq!(summary.overall.maa_r, brute_maa(&r, 10));
        assert_eq!(summary.overall.maa_t, brute_maa(&t, 10));
        assert_eq!(summary.overall.maa_max, brute_maa(&m, 10));
    }
    let total: usize = report.histogram.iter().map(|b| b.count).sum();
    assert_eq!(total, 8 * 60);
}

#[test]
fn pool_of_random_matrices_is_a_pre_scoring_failure() {
    let f = fixture(3, 200);
    let mut r = rng(41);
    let mut models = Vec::new();
    while models.len() < 30 {
        let m = Mat3::from_fn(|_, _| r.gen_range(-1.0..1.0));
        let model = Model::Fundamental(FundamentalMatrix::from_matrix(&m).unwrap());
        let e = hypothesis_error(&model, &f.corrs, &f.scene.ka, &f.scene.kb, &f.scene.gt_pose);
        // the oracle: keep only members verified to be far from the ground truth
        if e.max_deg() >= 10.0 {
            models.push(model);
        }
    }
    let pool = HypothesisPool {
        model_kind: ModelKind::Fundamental,
        provenance: vec![Vec::new(); models.len()],
        hypotheses: models,
        seed: 0,
    };
    for selected in [0, 13, 29] {
        let class = classify_failure(&pool, selected, &f.scene.gt_pose, &f.corrs, &f.scene.ka, &f.scene.kb, 1.0).unwrap();
        assert_eq!(class, FailureClass::PreScoringFailure);
    }
}

#[test]
fn selecting_a_plane_explaining_model_is_degenerate() {
    let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
    let gt = RelativePose::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), 0.15, Vec3::new(-1.0, 0.1, 0.05));
    // plane n·X = d in camera A
    let (n, d) = (Vec3::new(0.1, -0.2, 1.0).normalize(), 5.0);
    let mut r = rng(42);
    let mut corrs = Vec::new();
    while corrs.len() < 150 {
        let ray = k.normalize([r.gen_range(0.0..640.0), r.gen_range(0.0..480.0)]);
        let x = ray * (d / n.dot(&ray));
        if let Some(pb) = k.project(&gt.transform(&x)) {
            corrs.push(Correspondence::new([ray.x * 500.0 + 320.0, ray.y * 500.0 + 240.0], pb));
        }
    }
    let km = k.matrix();
    let h = km * (gt.rotation + gt.translation * n.transpose() / d) * k.inverse().unwrap();
    // any epipole gives a fundamental matrix consistent with the plane
    let wrong = FundamentalMatrix::from_matrix(&(skew(&Vec3::new(2000.0, -300.0, 1.0)) * h)).unwrap();
    let wrong = Model::Fundamental(wrong);
    let good = Model::Fundamental(compose_fundamental(&k, &k, &gt).unwrap());
    assert!(hypothesis_error(&wrong, &corrs, &k, &k, &gt).max_deg() >= 10.0);
    let pool = HypothesisPool {
        model_kind: ModelKind::Fundamental,
        hypotheses: vec![good, wrong],
        provenance: vec![Vec::new(); 2],
        seed: 0,
    };
    assert_eq!(classify_failure(&pool, 1, &gt, &corrs, &k, &k, 1.0).unwrap(), FailureClass::Degenerate);
    assert_eq!(classify_failure(&pool, 0, &gt, &corrs, &k, &k, 1.0).unwrap(), FailureClass::SelectedGood);
}

#[test]
fn classification_ignores_non_selected_order() {
    let f = fixture(5, 200);
    let errors: Vec<f64> = oracle_pose_scores(&f).iter().map(|v| -v).collect();
    let mut r = rng(43);
    for selected in [0, 10, 35] {
        let class = classify_from_errors(&errors, selected, || false);
        for _ in 0..20 {
            let mut others: Vec<f64> = errors.iter().enumerate().filter(|(i, _)| *i != selected).map(|(_, e)| *e).collect();
            use rand::seq::SliceRandom;
            others.shuffle(&mut r);
            let pos = r.gen_range(0..=others.len());
            others.insert(pos, errors[selected]);
            assert_eq!(classify_from_errors(&others, pos, || false), class);
        }
    }
}

#[test]
fn candidate_filter_reductions() {
    let f = fixture(6, 200);
    let base = msac_scores(&f);
    let oracle = oracle_pose_scores(&f);
    // top-1 is plain selection on the base scores
    assert_eq!(
        combine_filter(FilterMode::Candidate, &base, |i| oracle[i], 200, 1).unwrap(),
        select_best_values(&base).unwrap()
    );
    // k = pool size is plain selection on the rescorer
    let full = combine_filter(FilterMode::Candidate, &base, |i| oracle[i], 200, base.len()).unwrap();
    assert_eq!(full, select_best_values(&oracle).unwrap());
    assert_eq!(combine_filter(FilterMode::Candidate, &base, |i| oracle[i], 200, 10_000).unwrap(), full);
    assert!(oracle[full] >= oracle[select_best_values(&base).unwrap()]);
    assert!(combine_filter(FilterMode::Candidate, &base, |i| oracle[i], 200, 0).is_err());
    // correspondence boundary
    assert_eq!(combine_filter(FilterMode::Corresp, &base, |i| oracle[i], 99, 10).unwrap(), full);
    assert_eq!(
        combine_filter(FilterMode::Corresp, &base, |i| oracle[i], 100, 10).unwrap(),
        select_best_values(&base).unwrap()
    );
}

#[test]
fn modality_matches_pairwise_brute_force() {
    let mut r = rng(44);
    let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
    for trial in 0..40 {
        let gt = common::random_pose(&mut r);
        let corrs = common::project_points(&mut r, &gt, &k, &k, 30);
        let spread: f64 = if trial % 2 == 0 { 3.0 } else { 40.0 };
        let poses: Vec<RelativePose> = (0..5)
            .map(|_| {
                let d = RelativePose::from_axis_angle(random_unit(&mut r), r.gen_range(0.0..spread).to_radians(), Vec3::zeros());
                RelativePose::new(d.rotation * gt.rotation, gt.translation).unwrap()
            })
            .collect();
        let models: Vec<Model> = poses.iter().map(|p| Model::Fundamental(compose_fundamental(&k, &k, p).unwrap())).collect();
        let decomposed: Vec<RelativePose> = models.iter().map(|m| model_pose(m, &corrs, &k, &k).unwrap()).collect();
        let mut dmax: f64 = 0.0;
        let mut dmin = f64::INFINITY;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    let rot = pose_error(&decomposed[i], &decomposed[j]).rot_deg;
                    let a = decomposed[i].translation.normalize();
                    let b = decomposed[j].translation.normalize();
                    let tr = a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees();
                    dmax = dmax.max(rot.max(tr));
                    dmin = dmin.min(rot.max(tr));
                }
            }
        }
        let res = modality_analysis(&models, &corrs, &k, &k, ModalityRule::MaxPairwise);
        let expected = if dmax < 10.0 { Modality::Unimodal } else { Modality::Multimodal };
        if (dmax - 10.0).abs() > 1e-6 {
            assert_eq!(res.modality, expected, "trial {trial} dmax {dmax}");
        }
        assert!((res.max_distance - dmax).abs() < 1e-5);
        assert!((res.min_distance - dmin).abs() < 1e-5);
    }
    let one = Model::Fundamental(compose_fundamental(&k, &k, &common::random_pose(&mut r)).unwrap());
    let other = common::random_pose(&mut r);
    let corrs = common::project_points(&mut r, &other, &k, &k, 10);
    assert_eq!(modality_analysis(&[one; 5], &corrs, &k, &k, ModalityRule::MaxPairwise).modality, Modality::Unimodal);
}

#[test]
fn maa_matches_brute_force_on_random_lists() {
    let mut r = rng(45);
    for _ in 0..1000 {
        let n = r.gen_range(1..50);
        let errors: Vec<f64> = (0..n)
            .map(|_| match r.gen_range(0..4) {
                0 => r.gen_range(0..12) as f64,
                1 => f64::INFINITY,
                _ => r.gen_range(0.0..15.0),
            })
            .collect();
        assert_eq!(maa(&errors, 10.0).unwrap(), brute_maa(&errors, 10));
    }
}

#[test]
fn evaluation_rejects_inconsistent_inputs() {
    let f = fixture(7, 120);
    let pairs = [eval_pair(&f, 3)];
    let mut s = ScorerScores {
        name: "msac".into(),
        ..Default::default()
    };
    assert!(evaluate(&pairs, &[s.clone()], &EvalConfig::default()).is_err());
    s.by_pair.insert(3, vec![1.0; 5]);
    assert!(evaluate(&pairs, &[s.clone()], &EvalConfig::default()).is_err());
    assert!(evaluate(&[], &[s], &EvalConfig::default()).is_err());
}
