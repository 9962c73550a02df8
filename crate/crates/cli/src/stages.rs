//! Pipeline stages. Each reads and writes files only, so stages compose
//! through the file system and can be rerun from their manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use epi_core::criteria::{oracle_score, Aggregate, Criterion};
use epi_core::eval::{
    evaluate, hypothesis_error, EvalConfig, EvalPair, EvalReport, FilterMode, FilterSpec, ModalityRule, ScorerScores,
};
use epi_core::geom::{Mat3, ModelKind};
use epi_core::io::{read_jsonl, write_jsonl, PairRecord, SceneRecord, ScoresRecord, SCENE_SCHEMA, PAIR_SCHEMA, SCORES_SCHEMA};
use epi_core::rng;
use epi_core::robust::{generate_pool, score_pool, HypothesisPool, Method, PoolRecord, Solver};
use epi_core::synth::{dense_gt, generate_scene, render_pair, sample_correspondences, PairSpec, SceneConfig};
use epi_fsnet::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use epi_fsnet::loss::LossKind;
use epi_fsnet::model::{score_with_state, FeatureCache};
use epi_fsnet::train::{draw_batch, train_toy, TrainHyper, TrainOutcome, TrainPair};
use epi_fsnet::{NetworkConfig, Weights};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::manifest::RunManifest;

/// Grid spacing (pixels) of the dense correspondences behind the Sampson oracle.
pub const DENSE_STEP_PX: f64 = 4.0;
/// Score written for hypotheses a scorer cannot evaluate.
pub const UNSCORABLE: f64 = -f64::MAX;

/// Per-pair correspondence count: fixed, or drawn per pair from `lo..=hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CorrCount {
    Fixed(usize),
    Range(usize, usize),
}

impl FromStr for CorrCount {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::Usage(format!("--n-corr expects N or LO..HI, got {s:?}"));
        match s.split_once("..") {
            Some((lo, hi)) => {
                let lo: usize = lo.parse().map_err(|_| bad())?;
                let hi: usize = hi.parse().map_err(|_| bad())?;
                if lo > hi {
                    return Err(bad());
                }
                Ok(CorrCount::Range(lo, hi))
            }
            None => Ok(CorrCount::Fixed(s.parse().map_err(|_| bad())?)),
        }
    }
}

impl CorrCount {
    pub fn for_pair(&self, seed: u64, pair_id: u64) -> usize {
        match *self {
            CorrCount::Fixed(n) => n,
            CorrCount::Range(lo, hi) => lo + rng::index(&mut rng::stream(seed, pair_id, "n-corr"), hi - lo + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMethod {
    Robust(Method),
    OracleSampson,
    OraclePose,
    Fsnet,
}

impl FromStr for ScoreMethod {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle-sampson" => Ok(ScoreMethod::OracleSampson),
            "oracle-pose" => Ok(ScoreMethod::OraclePose),
            "fsnet" => Ok(ScoreMethod::Fsnet),
            other => Method::from_str(other)
                .map(ScoreMethod::Robust)
                .map_err(|_| CliError::Usage(format!("unknown scoring method {s:?}"))),
        }
    }
}

impl ScoreMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ScoreMethod::Robust(m) => m.name(),
            ScoreMethod::OracleSampson => "oracle-sampson",
            ScoreMethod::OraclePose => "oracle-pose",
            ScoreMethod::Fsnet => "fsnet",
        }
    }
}

pub fn parse_model_kind(s: &str) -> Result<ModelKind> {
    match s {
        "f" => Ok(ModelKind::Fundamental),
        "e" => Ok(ModelKind::Essential),
        _ => Err(CliError::Usage(format!("--model expects f or e, got {s:?}"))),
    }
}

fn overlap_band(lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(CliError::Usage(format!("overlap band ({lo}, {hi}) is not within [0, 1]")));
    }
    Ok((lo, hi))
}

// ---- gen-scenes ----

#[derive(Clone, Debug)]
pub struct GenScenes {
    pub n: usize,
    pub seed: u64,
    pub overlap: (f64, f64),
    pub size: usize,
    pub out: PathBuf,
}

pub fn gen_scenes(args: &GenScenes, command: Vec<String>) -> Result<()> {
    let band = overlap_band(args.overlap.0, args.overlap.1)?;
    let spec = PairSpec {
        overlap_band: band,
        ..PairSpec::default()
    };
    let config = SceneConfig::square(args.size);
    let records = epi_core::par::map_range(args.n, |i| {
        let seed = rng::derive_seed(args.seed, i as u64, "scene");
        generate_scene(&spec, &config, seed).map(|scene| SceneRecord {
            schema: SCENE_SCHEMA.into(),
            scene_id: i as u64,
            seed,
            config: config.clone(),
            scene,
        })
    })
    .into_iter()
    .collect::<std::result::Result<Vec<_>, _>>()?;
    write_jsonl(&args.out, &records)?;
    RunManifest::new(command)
        .seed("seed", args.seed)
        .config("scene_config", &config)?
        .config("overlap_band", &band)?
        .finish(&[&args.out])?;
    Ok(())
}

// ---- gen-pairs ----

#[derive(Clone, Debug)]
pub struct GenPairs {
    pub scenes: PathBuf,
    pub noise_px: f64,
    pub outlier_rate: f64,
    pub n_corr: CorrCount,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn gen_pairs(args: &GenPairs, command: Vec<String>) -> Result<()> {
    let scenes: Vec<SceneRecord> = read_jsonl(&args.scenes)?;
    let records = epi_core::par::map(&scenes, |s| -> Result<PairRecord> {
        let spec = PairSpec {
            noise_px: args.noise_px,
            outlier_rate: args.outlier_rate,
            n_corrs: args.n_corr.for_pair(args.seed, s.scene_id),
            overlap_band: (0.0, 1.0),
        };
        let seed = rng::derive_seed(args.seed, s.scene_id, "corrs");
        let sampled = sample_correspondences(&s.scene, &spec, seed)?;
        Ok(PairRecord {
            schema: PAIR_SCHEMA.into(),
            pair_id: s.scene_id,
            scene_id: s.scene_id,
            seed,
            spec,
            scene: s.scene.clone(),
            correspondences: sampled.correspondences,
            inlier_mask: sampled.inlier_mask,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_jsonl(&args.out, &records)?;
    RunManifest::new(command)
        .seed("seed", args.seed)
        .config("n_corr", &args.n_corr)?
        .config("noise_outliers", &(args.noise_px, args.outlier_rate))?
        .input(&args.scenes)?
        .finish(&[&args.out])?;
    Ok(())
}

// ---- gen-pool ----

#[derive(Clone, Debug)]
pub struct GenPool {
    pub pairs: PathBuf,
    pub model: ModelKind,
    pub n: usize,
    pub solver: Solver,
    pub seed: u64,
    /// Replace one seeded slot of each pool by the ground-truth model.
    pub with_gt: bool,
    pub out: PathBuf,
}

/// Pool for one pair as the `gen-pool` stage builds it.
pub fn pool_for_pair(pair: &PairRecord, n: usize, solver: Solver, seed: u64, with_gt: bool) -> Result<HypothesisPool> {
    let pool_seed = rng::derive_seed(seed, pair.pair_id, "pool");
    let mut pool = generate_pool(&pair.correspondences, n, solver, pool_seed, &pair.scene.ka, &pair.scene.kb)?;
    if with_gt {
        let slot = rng::index(&mut rng::stream(seed, pair.pair_id, "gt-slot"), pool.len());
        pool.replace(slot, pair.scene.gt_model(pool.model_kind)?)?;
    }
    Ok(pool)
}

pub fn gen_pool(args: &GenPool, command: Vec<String>) -> Result<()> {
    if args.solver.model_kind() != args.model {
        return Err(CliError::Usage(format!(
            "solver {} produces {:?} models, not {:?}",
            args.solver.name(),
            args.solver.model_kind(),
            args.model
        )));
    }
    if args.n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let pairs: Vec<PairRecord> = read_jsonl(&args.pairs)?;
    let records = pairs
        .iter()
        .map(|p| pool_for_pair(p, args.n, args.solver, args.seed, args.with_gt).map(|pool| PoolRecord::from_pool(p.pair_id, &pool)))
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(&args.out, &records)?;
    RunManifest::new(command)
        .seed("seed", args.seed)
        .config("pool", &(args.solver.name(), args.n, args.with_gt))?
        .input(&args.pairs)?
        .finish(&[&args.out])?;
    Ok(())
}

// ---- score ----

#[derive(Clone, Debug)]
pub struct Score {
    pub pool: PathBuf,
    pub pairs: PathBuf,
    pub method: ScoreMethod,
    pub threshold: f64,
    pub weights: Option<PathBuf>,
    pub out: PathBuf,
}

/// Loads pairs and pools and matches them by pair id.
pub fn load_pairs_and_pools(pairs: &Path, pools: &Path) -> Result<Vec<(PairRecord, HypothesisPool)>> {
    let pairs: Vec<PairRecord> = read_jsonl(pairs)?;
    let pools: Vec<PoolRecord> = read_jsonl(pools)?;
    let mut by_id: BTreeMap<u64, PoolRecord> = BTreeMap::new();
    for p in pools {
        if by_id.insert(p.pair_id, p).is_some() {
            return Err(CliError::Input("duplicate pair id in pool file".into()));
        }
    }
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let rec = by_id
            .remove(&pair.pair_id)
            .ok_or_else(|| CliError::Input(format!("no pool for pair {}", pair.pair_id)))?;
        out.push((pair, rec.to_pool()?));
    }
    if let Some(id) = by_id.keys().next() {
        return Err(CliError::Input(format!("pool for unknown pair {id}")));
    }
    Ok(out)
}

/// Fundamental matrices of a pool in pixel coordinates.
pub fn pool_fundamentals(pair: &PairRecord, pool: &HypothesisPool) -> Result<Vec<Mat3>> {
    pool.hypotheses
        .iter()
        .map(|m| Ok(*m.to_fundamental(&pair.scene.ka, &pair.scene.kb)?.matrix()))
        .collect()
}

/// Scores of every hypothesis in `pool`; higher is better.
pub fn score_values(
    method: ScoreMethod,
    pair: &PairRecord,
    pool: &HypothesisPool,
    threshold: f64,
    weights: Option<&Weights>,
) -> Result<Vec<f64>> {
    let (ka, kb) = (&pair.scene.ka, &pair.scene.kb);
    match method {
        ScoreMethod::Robust(m) => Ok(score_pool(pool, &pair.correspondences, ka, kb, m, threshold)?
            .into_iter()
            .map(|r| r.value)
            .collect()),
        ScoreMethod::OraclePose => Ok(pool
            .hypotheses
            .iter()
            .map(|h| -hypothesis_error(h, &pair.correspondences, ka, kb, &pair.scene.gt_pose).max_deg())
            .collect()),
        ScoreMethod::OracleSampson => {
            let dense = dense_gt(&pair.scene, DENSE_STEP_PX)?;
            let fs = pool
                .hypotheses
                .iter()
                .map(|m| m.to_fundamental(ka, kb))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(epi_core::par::map(&fs, |f| {
                oracle_score(f, &dense, Criterion::Sampson, Aggregate::default())
                    .map(|s| -s.value)
                    .unwrap_or(UNSCORABLE)
            }))
        }
        ScoreMethod::Fsnet => {
            let w = weights.ok_or_else(|| CliError::Usage("--method fsnet needs --weights".into()))?;
            let fs = pool_fundamentals(pair, pool)?;
            let images = render_pair(&pair.scene);
            let cache = FeatureCache::new();
            let state = cache.pair(&images.0, &images.1, w)?;
            let out = epi_core::par::map(&fs, |f| score_with_state(&state, f, w));
            out.into_iter()
                .enumerate()
                .map(|(i, r)| match r {
                    Ok(s) => Ok(-s.score()),
                    Err(epi_fsnet::FsnetError::Degenerate(m)) => {
                        log::warn!("pair {} hypothesis {i}: {m}", pair.pair_id);
                        Ok(UNSCORABLE)
                    }
                    Err(e) => Err(e.into()),
                })
                .collect()
        }
    }
}

pub fn score(args: &Score, command: Vec<String>) -> Result<()> {
    if !(args.threshold > 0.0) || !args.threshold.is_finite() {
        return Err(CliError::Usage(format!("--threshold must be positive, got {}", args.threshold)));
    }
    let weights = match (&args.weights, args.method) {
        (Some(p), ScoreMethod::Fsnet) => Some(Weights::load(p)?),
        (None, ScoreMethod::Fsnet) => return Err(CliError::Usage("--method fsnet needs --weights".into())),
        _ => None,
    };
    let data = load_pairs_and_pools(&args.pairs, &args.pool)?;
    let records = data
        .iter()
        .map(|(pair, pool)| {
            Ok(ScoresRecord {
                schema: SCORES_SCHEMA.into(),
                pair_id: pair.pair_id,
                method: args.method.name().into(),
                threshold: args.threshold,
                values: score_values(args.method, pair, pool, args.threshold, weights.as_ref())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(&args.out, &records)?;
    let mut m = RunManifest::new(command)
        .config("method", &(args.method.name(), args.threshold))?
        .input(&args.pairs)?
        .input(&args.pool)?;
    if let Some(w) = &args.weights {
        m = m.input(w)?;
    }
    m.finish(&[&args.out])?;
    Ok(())
}

// ---- train ----

#[derive(Clone, Debug)]
pub struct Train {
    pub pairs: PathBuf,
    pub pools: PathBuf,
    pub config: String,
    pub hyper: TrainHyper,
    pub out: PathBuf,
}

/// Training pairs from pair and pool files; essential pools are converted to
/// pixel-space fundamental matrices.
pub fn training_pairs(data: &[(PairRecord, HypothesisPool)], config: &NetworkConfig) -> Result<Vec<TrainPair>> {
    epi_core::par::map(data, |(pair, pool)| -> Result<TrainPair> {
        let sc = &pair.scene;
        let errors = pool
            .hypotheses
            .iter()
            .map(|h| hypothesis_error(h, &pair.correspondences, &sc.ka, &sc.kb, &sc.gt_pose))
            .collect();
        let gt = *sc.gt_fundamental()?.matrix();
        Ok(TrainPair::new(config, pair.pair_id, &render_pair(sc), gt, pool_fundamentals(pair, pool)?, errors)?)
    })
    .into_iter()
    .collect()
}

pub fn log_path(weights: &Path) -> PathBuf {
    weights.with_extension("log.csv")
}

pub fn train(args: &Train, command: Vec<String>) -> Result<TrainOutcome> {
    let config = NetworkConfig::by_name(&args.config)?;
    let data = load_pairs_and_pools(&args.pairs, &args.pools)?;
    let dataset = training_pairs(&data, &config)?;
    let outcome = train_toy(&dataset, &config, &args.hyper, None)?;
    outcome.weights.save(&args.out)?;
    let log = log_path(&args.out);
    let mut f = std::io::BufWriter::new(std::fs::File::create(&log)?);
    outcome.write_log_csv(&mut f)?;
    drop(f);
    RunManifest::new(command)
        .seed("seed", args.hyper.seed)
        .config("network", &config.fingerprint())?
        .config("hyper", &format!("{:?}", args.hyper))?
        .input(&args.pairs)?
        .input(&args.pools)?
        .finish(&[&args.out, &log])?;
    Ok(outcome)
}

// ---- eval ----

#[derive(Clone, Debug)]
pub struct Eval {
    /// `(scorer name, scores file)`.
    pub scores: Vec<(Option<String>, PathBuf)>,
    pub pairs: PathBuf,
    pub pools: PathBuf,
    pub maa_max: f64,
    pub filter: Option<FilterMode>,
    pub k: Option<usize>,
    pub base: Option<String>,
    pub rescorer: Option<String>,
    pub refine: bool,
    pub threshold: f64,
    pub modality_rule: ModalityRule,
    pub out: PathBuf,
}

pub fn rows_path(report: &Path) -> PathBuf {
    report.with_extension("rows.csv")
}

pub fn histogram_path(report: &Path) -> PathBuf {
    report.with_extension("hist.csv")
}

pub fn load_scores(path: &Path, name: Option<&str>) -> Result<ScorerScores> {
    let records: Vec<ScoresRecord> = read_jsonl(path)?;
    let name = match name {
        Some(n) => n.to_string(),
        None => records
            .first()
            .map(|r| r.method.clone())
            .ok_or_else(|| CliError::Input(format!("{}: empty scores file", path.display())))?,
    };
    let mut by_pair = BTreeMap::new();
    for r in records {
        if by_pair.insert(r.pair_id, r.values).is_some() {
            return Err(CliError::Input(format!("{}: duplicate pair {}", path.display(), r.pair_id)));
        }
    }
    Ok(ScorerScores { name, by_pair })
}

/// Evaluation over already loaded pairs, pools and scores.
pub fn evaluate_loaded(
    data: &[(PairRecord, HypothesisPool)],
    scorers: &[ScorerScores],
    config: &EvalConfig,
) -> Result<EvalReport> {
    let pairs: Vec<EvalPair> = data
        .iter()
        .map(|(p, pool)| EvalPair {
            pair_id: p.pair_id,
            ka: p.scene.ka,
            kb: p.scene.kb,
            gt_pose: p.scene.gt_pose,
            corrs: &p.correspondences,
            pool,
        })
        .collect();
    Ok(evaluate(&pairs, scorers, config)?)
}

pub fn eval(args: &Eval, command: Vec<String>) -> Result<EvalReport> {
    if args.scores.is_empty() {
        return Err(CliError::Usage("eval needs at least one --scores file".into()));
    }
    let scorers = args
        .scores
        .iter()
        .map(|(n, p)| load_scores(p, n.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    for (i, s) in scorers.iter().enumerate() {
        if scorers[..i].iter().any(|o| o.name == s.name) {
            return Err(CliError::Usage(format!("scorer name {:?} given twice; use NAME=PATH", s.name)));
        }
    }
    let data = load_pairs_and_pools(&args.pairs, &args.pools)?;
    let filter = match args.filter {
        None => None,
        Some(mode) => {
            let base = args.base.clone().unwrap_or_else(|| scorers[0].name.clone());
            let rescorer = match &args.rescorer {
                Some(r) => r.clone(),
                None => scorers
                    .get(1)
                    .map(|s| s.name.clone())
                    .ok_or_else(|| CliError::Usage("a filter needs a rescorer: pass --rescorer or two --scores".into()))?,
            };
            let kind = data.first().map(|(_, p)| p.model_kind).unwrap_or(ModelKind::Fundamental);
            let k = args.k.unwrap_or_else(|| epi_core::eval::default_candidate_k(kind));
            if k == 0 {
                return Err(CliError::Usage("--k must be positive".into()));
            }
            Some(FilterSpec { mode, base, rescorer, k })
        }
    };
    let config = EvalConfig {
        maa_max: args.maa_max,
        refine: args.refine,
        threshold: args.threshold,
        filter,
        modality_rule: args.modality_rule,
        ..EvalConfig::default()
    };
    let report = evaluate_loaded(&data, &scorers, &config)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&args.out, text)?;
    let rows = rows_path(&args.out);
    let hist = histogram_path(&args.out);
    report.write_rows_csv(std::io::BufWriter::new(std::fs::File::create(&rows)?))?;
    report.write_histogram_csv(std::io::BufWriter::new(std::fs::File::create(&hist)?))?;
    let mut m = RunManifest::new(command)
        .config("eval", &config)?
        .input(&args.pairs)?
        .input(&args.pools)?;
    for (_, p) in &args.scores {
        m = m.input(p)?;
    }
    m.finish(&[&args.out, &rows, &hist])?;
    Ok(report)
}

// ---- gradcheck ----

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub config: String,
    pub seed: u64,
    pub losses: Vec<LossKind>,
    pub tolerance: f64,
}

#[derive(Debug, Serialize)]
pub struct GradCheckLine {
    pub loss: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub tensors: usize,
    pub worst_tensor: Option<String>,
    pub pass: bool,
}

/// A training-shaped batch (two pairs, bin-sampled hypotheses) at the seed.
pub fn gradcheck_batch_pairs(config: &NetworkConfig, seed: u64) -> Result<Vec<TrainPair>> {
    (0..2)
        .map(|i| Ok(epi_fsnet::gradcheck::synthetic_batch(config, rng::derive_seed(seed, i, "gradcheck"), 30)?))
        .collect()
}

pub fn gradcheck_run(config: &NetworkConfig, seed: u64, kind: LossKind) -> Result<GradCheckReport> {
    let pairs = gradcheck_batch_pairs(config, seed)?;
    let hyper = TrainHyper {
        seed,
        loss: kind,
        ..TrainHyper::default()
    };
    let batch = draw_batch(&pairs, &hyper, 0);
    let weights = Weights::init(config, seed)?;
    let opts = GradCheckOptions {
        seed,
        ..GradCheckOptions::default()
    };
    Ok(grad_check(&weights, &batch, kind, &opts)?)
}

pub fn gradcheck(args: &GradCheck) -> Result<Vec<GradCheckLine>> {
    let config = NetworkConfig::by_name(&args.config)?;
    let mut lines = Vec::new();
    for kind in &args.losses {
        let r = gradcheck_run(&config, args.seed, *kind)?;
        lines.push(GradCheckLine {
            loss: match kind {
                LossKind::SoftL1 => "soft-l1",
                LossKind::WeightedCe => "weighted-ce",
            },
            max_rel_error: r.max_rel_error,
            checked: r.checked,
            skipped: r.skipped,
            tensors: r.tensors,
            worst_tensor: r.worst.map(|w| w.tensor),
            pass: r.max_rel_error < args.tolerance,
        });
    }
    Ok(lines)
}
