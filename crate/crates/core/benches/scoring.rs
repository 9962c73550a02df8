use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use epi_core::par;
use epi_core::robust::{generate_pool, score, Method, Solver};
use epi_core::synth::{generate_scene, sample_correspondences, PairSpec, SceneConfig};

fn pool_scoring(c: &mut Criterion) {
    let spec = PairSpec {
        n_corrs: 1000,
        ..PairSpec::default()
    };
    let scene = generate_scene(&spec, &SceneConfig::default(), 1).unwrap();
    let corrs = sample_correspondences(&scene, &spec, 1).unwrap().correspondences;
    let pool = generate_pool(&corrs, 500, Solver::F7, 1, &scene.ka, &scene.kb).unwrap();
    let fs: Vec<_> = pool
        .hypotheses
        .iter()
        .map(|m| m.to_fundamental(&scene.ka, &scene.kb).unwrap())
        .collect();

    let mut group = c.benchmark_group("score_500_hypotheses");
    group.sample_size(20);
    for method in [Method::Ransac, Method::Marginalized] {
        group.bench_with_input(BenchmarkId::new("sequential", method), &method, |b, &m| {
            b.iter(|| par::map_sequential(&fs, |f| score(f, black_box(&corrs), m, 1.0).unwrap().value))
        });
        group.bench_with_input(BenchmarkId::new("parallel", method), &method, |b, &m| {
            b.iter(|| par::map(&fs, |f| score(f, black_box(&corrs), m, 1.0).unwrap().value))
        });
    }
    group.finish();
}

fn pool_generation(c: &mut Criterion) {
    let scene = generate_scene(&PairSpec::default(), &SceneConfig::default(), 2).unwrap();
    let corrs = sample_correspondences(&scene, &PairSpec::default(), 2).unwrap().correspondences;
    c.bench_function("generate_pool_f7_500", |b| {
        b.iter(|| generate_pool(black_box(&corrs), 500, Solver::F7, 3, &scene.ka, &scene.kb).unwrap())
    });
}

criterion_group!(benches, pool_scoring, pool_generation);
criterion_main!(benches);
