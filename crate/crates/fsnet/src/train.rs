//! Synthetic training data and the momentum-SGD training loop.

use std::collections::BTreeMap;

use epi_core::eval::hypothesis_error;
use epi_core::geom::{Correspondence, Mat3, Model, PoseError};
use epi_core::rng;
use epi_core::robust::{generate_pool, HypothesisPool, Solver};
use epi_core::synth::{generate_scene, render_pair, sample_correspondences, Image, PairSpec, SceneConfig, SyntheticScene};
use rand::Rng;

use crate::config::NetworkConfig;
use crate::error::{FsnetError, Result};
use crate::graph::Graph;
use crate::loss::{loss, target, LossKind};
use crate::model::{feature_matrices, Net, ScoreOutput};
use crate::preprocess::{adapt_fundamental, prepare, Prepared};
use crate::weights::Weights;

/// Pose-error bin edges (degrees) used to balance training batches.
pub const BIN_EDGES: [f64; 7] = [0.0, 5.0, 10.0, 20.0, 40.0, 90.0, 180.0];

/// Bin of an error; the last bin is closed at 180°.
pub fn bin_of(err: f64) -> usize {
    let last = BIN_EDGES.len() - 2;
    (0..last).find(|&i| err < BIN_EDGES[i + 1]).unwrap_or(last)
}

/// Picks a uniformly random non-empty bin, then a uniform member of it.
/// `errors` are `max(e_R, e_t)`; `None` marks an excluded hypothesis.
pub fn sample_binned<R: Rng>(errors: &[Option<f64>], rng: &mut R) -> Option<usize> {
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); BIN_EDGES.len() - 1];
    for (i, e) in errors.iter().enumerate() {
        if let Some(e) = e {
            bins[bin_of(*e)].push(i);
        }
    }
    let filled: Vec<&Vec<usize>> = bins.iter().filter(|b| !b.is_empty()).collect();
    if filled.is_empty() {
        return None;
    }
    let bin = filled[rng::index(rng, filled.len())];
    Some(bin[rng::index(rng, bin.len())])
}

/// How the synthetic pairs are generated.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub pair_spec: PairSpec,
    pub scene: SceneConfig,
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            pair_spec: PairSpec::default(),
            scene: SceneConfig::square(256),
            pool_size: 100,
            seed: 0,
        }
    }
}

/// One generated pair with everything training and evaluation need.
#[derive(Clone, Debug)]
pub struct SynthPair {
    pub id: u64,
    pub scene: SyntheticScene,
    pub images: (Image, Image),
    pub corrs: Vec<Correspondence>,
    pub inlier_mask: Vec<bool>,
    /// Contains the ground-truth matrix at `gt_index`.
    pub pool: HypothesisPool,
    pub gt_index: usize,
    pub errors: Vec<PoseError>,
}

const SCENE_RETRIES: u64 = 8;

/// Generates pair `id`; a scene that cannot reach the overlap band is
/// redrawn from the next sub-seed.
pub fn synth_pair(spec: &DatasetSpec, id: u64) -> Result<SynthPair> {
    let mut last = None;
    for attempt in 0..SCENE_RETRIES {
        let seed = rng::derive_seed(spec.seed, id, &format!("scene{attempt}"));
        match generate_scene(&spec.pair_spec, &spec.scene, seed) {
            Ok(scene) => return finish_pair(spec, id, scene),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt").into())
}

fn finish_pair(spec: &DatasetSpec, id: u64, scene: SyntheticScene) -> Result<SynthPair> {
    let sampled = sample_correspondences(&scene, &spec.pair_spec, rng::derive_seed(spec.seed, id, "corrs"))?;
    let corrs = sampled.correspondences;
    let pool_seed = rng::derive_seed(spec.seed, id, "pool");
    let mut pool = generate_pool(&corrs, spec.pool_size, Solver::F7, pool_seed, &scene.ka, &scene.kb)?;
    let gt_index = rng::index(&mut rng::stream(spec.seed, id, "gt-slot"), pool.len());
    pool.replace(gt_index, Model::Fundamental(scene.gt_fundamental()?))?;
    let errors = pool
        .hypotheses
        .iter()
        .map(|m| hypothesis_error(m, &corrs, &scene.ka, &scene.kb, &scene.gt_pose))
        .collect();
    let images = render_pair(&scene);
    Ok(SynthPair {
        id,
        scene,
        images,
        corrs,
        inlier_mask: sampled.inlier_mask,
        pool,
        gt_index,
        errors,
    })
}

/// Pairs `first..first + n`, generated in parallel when enabled.
pub fn synth_pairs(spec: &DatasetSpec, first: u64, n: usize) -> Result<Vec<SynthPair>> {
    epi_core::par::map_range(n, |i| synth_pair(spec, first + i as u64))
        .into_iter()
        .collect()
}

/// A pair reduced to what the training loop reads.
#[derive(Clone, Debug)]
pub struct TrainPair {
    pub id: u64,
    pub a: Prepared,
    pub b: Prepared,
    /// Ground-truth fundamental matrix in source pixels.
    pub gt: Mat3,
    pub hypotheses: Vec<Mat3>,
    pub errors: Vec<PoseError>,
}

impl SynthPair {
    pub fn to_train(&self, config: &NetworkConfig) -> Result<TrainPair> {
        TrainPair::new(
            config,
            self.id,
            &self.images,
            *self.scene.gt_fundamental()?.matrix(),
            self.pool.hypotheses.iter().map(|m| *m.matrix()).collect(),
            self.errors.clone(),
        )
    }
}

impl TrainPair {
    /// `hypotheses` are fundamental matrices in source pixels, `errors` their
    /// true pose errors.
    pub fn new(
        config: &NetworkConfig,
        id: u64,
        images: &(Image, Image),
        gt: Mat3,
        hypotheses: Vec<Mat3>,
        errors: Vec<PoseError>,
    ) -> Result<Self> {
        if hypotheses.len() != errors.len() {
            return Err(FsnetError::Shape(format!(
                "pair {id}: {} hypotheses but {} errors",
                hypotheses.len(),
                errors.len()
            )));
        }
        Ok(Self {
            id,
            a: prepare(&images.0, config.input_size)?,
            b: prepare(&images.1, config.input_size)?,
            gt,
            hypotheses,
            errors,
        })
    }

    /// Candidates for batch sampling: the pool plus the ground truth when the
    /// pool lacks it; hypotheses with undefined translation error are dropped.
    pub fn candidates(&self) -> Vec<(Mat3, PoseError)> {
        let mut out: Vec<(Mat3, PoseError)> = self
            .hypotheses
            .iter()
            .zip(&self.errors)
            .filter(|(_, e)| e.trans_deg.is_some())
            .map(|(m, e)| (*m, *e))
            .collect();
        let excluded = self.hypotheses.len() - out.len();
        if excluded > 0 {
            log::debug!("pair {}: {excluded} hypotheses without a translation error excluded", self.id);
        }
        if !self.hypotheses.iter().any(|m| *m == self.gt) {
            out.push((
                self.gt,
                PoseError {
                    rot_deg: 0.0,
                    trans_deg: Some(0.0),
                },
            ));
        }
        out
    }
}

/// One pair's contribution to a batch.
#[derive(Clone, Debug)]
pub struct BatchItem<'a> {
    pub pair: &'a TrainPair,
    pub hypotheses: Vec<(Mat3, PoseError)>,
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    /// Mean loss over every hypothesis in the batch.
    pub loss: f64,
    pub preds: Vec<ScoreOutput>,
    /// `∂loss/∂(e_R, e_t)` per prediction, including the batch mean.
    pub pred_grads: Vec<[f64; 2]>,
    pub grads: Option<BTreeMap<String, Vec<f64>>>,
    /// Branch signature of the forward pass.
    pub signature: u64,
}

/// Forward pass (and optionally the gradients) of the mean batch loss.
pub fn batch_loss(weights: &Weights, batch: &[BatchItem], kind: LossKind, with_grads: bool) -> Result<BatchResult> {
    let count: usize = batch.iter().map(|b| b.hypotheses.len()).sum();
    if count == 0 {
        return Err(FsnetError::Empty("training batch"));
    }
    let net = Net::new(weights);
    let mut g = if with_grads { Graph::new() } else { Graph::inference() };
    let mut outputs = Vec::with_capacity(count);
    for item in batch {
        let fa = net.extract(&mut g, &item.pair.a.tensor)?;
        let fb = net.extract(&mut g, &item.pair.b.tensor)?;
        let ta = net.to_tokens(&mut g, fa);
        let tb = net.to_tokens(&mut g, fb);
        let (ta, tb) = net.transform(&mut g, ta, tb)?;
        let va = net.project(&mut g, ta)?;
        let vb = net.project(&mut g, tb)?;
        let (xa, xb) = (&item.pair.a.transform, &item.pair.b.transform);
        for (f, err) in &item.hypotheses {
            target(err)?;
            let (m_ab, _) = feature_matrices(&adapt_fundamental(f, xa, xb))?;
            let (m_ba, _) = feature_matrices(&adapt_fundamental(&f.transpose(), xb, xa))?;
            let out = net.score_hypothesis(&mut g, &va, &vb, &m_ab, &m_ba)?;
            outputs.push((out, *err));
        }
    }
    let t_s = weights.config.clamp_scale;
    let mut total = 0.0;
    let mut preds = Vec::with_capacity(count);
    let mut seeds = Vec::with_capacity(count);
    let mut pred_grads = Vec::with_capacity(count);
    for (out, err) in &outputs {
        let v = g.value(*out);
        let pred = ScoreOutput {
            e_r: v.data[0],
            e_t: v.data[1],
        };
        let l = loss(kind, &pred, err, t_s)?;
        total += l.value;
        preds.push(pred);
        let d = [l.grad[0] / count as f64, l.grad[1] / count as f64];
        pred_grads.push(d);
        seeds.push((*out, d.to_vec()));
    }
    let grads = if with_grads {
        g.backward(&seeds);
        Some(g.param_grads())
    } else {
        None
    };
    Ok(BatchResult {
        loss: total / count as f64,
        preds,
        pred_grads,
        grads,
        signature: g.signature(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    /// Pairs per step.
    pub batch: usize,
    /// Bin-sampled hypotheses per pair and step.
    pub hypotheses_per_pair: usize,
    pub steps: usize,
    pub seed: u64,
    pub momentum: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip: Option<f64>,
    pub loss: LossKind,
    pub schedule: LrSchedule,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `lr` down to zero over the run.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, lr: f64, step: usize, steps: usize) -> f64 {
        match self {
            LrSchedule::Constant => lr,
            LrSchedule::Cosine => 0.5 * lr * (1.0 + (std::f64::consts::PI * step as f64 / steps.max(1) as f64).cos()),
        }
    }
}

impl std::str::FromStr for LrSchedule {
    type Err = FsnetError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" => Ok(LrSchedule::Cosine),
            _ => Err(FsnetError::Format(format!("unknown lr schedule {s:?}"))),
        }
    }
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch: 2,
            hypotheses_per_pair: 8,
            steps: 2000,
            seed: 0,
            momentum: 0.9,
            clip: None,
            loss: LossKind::SoftL1,
            schedule: LrSchedule::Constant,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: Weights,
    pub log: Vec<LogRow>,
}

impl TrainOutcome {
    pub fn write_log_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "step,loss,grad_norm")?;
        for r in &self.log {
            writeln!(w, "{},{},{}", r.step, r.loss, r.grad_norm)?;
        }
        Ok(())
    }
}

/// The batch drawn at `step`: distinct pairs, bin-sampled hypotheses.
pub fn draw_batch<'a>(dataset: &'a [TrainPair], hyper: &TrainHyper, step: usize) -> Vec<BatchItem<'a>> {
    let mut r = rng::stream(hyper.seed, step as u64, "batch");
    let n = hyper.batch.min(dataset.len());
    rng::sample_distinct(&mut r, dataset.len(), n)
        .into_iter()
        .filter_map(|i| {
            let pair = &dataset[i];
            let cands = pair.candidates();
            let errs: Vec<Option<f64>> = cands.iter().map(|(_, e)| Some(e.max_deg())).collect();
            let hyps: Vec<(Mat3, PoseError)> = (0..hyper.hypotheses_per_pair)
                .filter_map(|_| sample_binned(&errs, &mut r).map(|k| cands[k]))
                .collect();
            (!hyps.is_empty()).then_some(BatchItem { pair, hypotheses: hyps })
        })
        .collect()
}

/// Trains from `init` (or a fresh seeded initialization).
pub fn train_toy(
    dataset: &[TrainPair],
    config: &NetworkConfig,
    hyper: &TrainHyper,
    init: Option<Weights>,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(FsnetError::Empty("training dataset"));
    }
    config.validate()?;
    let mut weights = match init {
        Some(w) => w,
        None => Weights::init(config, hyper.seed)?,
    };
    let mut velocity: BTreeMap<String, Vec<f64>> =
        weights.tensors.iter().map(|(k, t)| (k.clone(), vec![0.0; t.len()])).collect();
    let mut log = Vec::with_capacity(hyper.steps);
    for step in 0..hyper.steps {
        let batch = draw_batch(dataset, hyper, step);
        if batch.is_empty() {
            return Err(FsnetError::Empty("batch after excluding undefined ground truth"));
        }
        let res = batch_loss(&weights, &batch, hyper.loss, true)?;
        let grads = res.grads.expect("gradients requested");
        let norm = grads.values().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if !res.loss.is_finite() || !norm.is_finite() {
            let bad: Vec<&String> = grads
                .iter()
                .filter(|(_, g)| g.iter().any(|v| !v.is_finite()))
                .map(|(k, _)| k)
                .collect();
            return Err(FsnetError::NonFiniteLoss {
                step,
                detail: format!(
                    "loss {} grad norm {norm}; pairs {:?}; non-finite gradients in {bad:?}",
                    res.loss,
                    batch.iter().map(|b| b.pair.id).collect::<Vec<_>>()
                ),
            });
        }
        let scale = match hyper.clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let lr = hyper.schedule.rate(hyper.lr, step, hyper.steps);
        for (name, g) in &grads {
            let v = velocity.get_mut(name).expect("velocity per tensor");
            let w = weights.tensors.get_mut(name).expect("tensor per gradient");
            for ((wi, vi), gi) in w.data.iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = hyper.momentum * *vi + scale * gi;
                *wi -= lr * *vi;
            }
        }
        weights.apply_precision();
        log.push(LogRow {
            step,
            loss: res.loss,
            grad_norm: norm,
        });
        if step % 100 == 0 {
            log::info!("step {step}: loss {:.5} grad norm {norm:.4}", res.loss);
        }
    }
    Ok(TrainOutcome { weights, log })
}

/// Mean loss over a fixed, seeded probe batch per pair; used to compare
/// checkpoints on the same data.
pub fn probe_loss(weights: &Weights, dataset: &[TrainPair], kind: LossKind, per_pair: usize, seed: u64) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for pair in dataset {
        let mut r = rng::stream(seed, pair.id, "probe");
        let cands = pair.candidates();
        let errs: Vec<Option<f64>> = cands.iter().map(|(_, e)| Some(e.max_deg())).collect();
        let hyps: Vec<(Mat3, PoseError)> = (0..per_pair)
            .filter_map(|_| sample_binned(&errs, &mut r).map(|k| cands[k]))
            .collect();
        if hyps.is_empty() {
            continue;
        }
        let n = hyps.len();
        let res = batch_loss(weights, &[BatchItem { pair, hypotheses: hyps }], kind, false)?;
        total += res.loss * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(FsnetError::Empty("probe set"));
    }
    Ok(total / count as f64)
}
