//! Reverse-mode gradients against central finite differences.
//!
//! The differences are taken on the network outputs and contracted with the
//! loss derivative at the unperturbed point, i.e. on the linearized loss
//! `Σ ∂L/∂pred · pred(θ)`, whose gradient at the base point equals the loss
//! gradient. Differencing the scalar loss directly loses several digits to
//! its rounding, which swamps parameters with gradients near 1e-9. The loss
//! derivatives themselves are checked separately.

use epi_core::rng;

use crate::config::Precision;
use crate::error::{FsnetError, Result};
use crate::loss::LossKind;
use crate::model::ScoreOutput;
use crate::train::{batch_loss, synth_pair, BatchItem, DatasetSpec, TrainPair};
use crate::weights::Weights;

pub const MIN_CHECKED: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Minimum number of entries checked per tensor.
    pub per_tensor: usize,
    pub seed: u64,
    /// Negates one analytic entry before comparing.
    pub sabotage: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            per_tensor: 2,
            seed: 0,
            sabotage: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Worst {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose stencil crossed an activation kink and were not compared.
    pub skipped: usize,
    pub tensors: usize,
    pub max_abs_grad: f64,
    pub worst: Option<Worst>,
    /// Every compared entry.
    pub entries: Vec<Worst>,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

pub fn grad_check(weights: &Weights, batch: &[BatchItem], kind: LossKind, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    if weights.config.precision != Precision::F64 {
        return Err(FsnetError::Config("gradient check needs 64-bit weights".into()));
    }
    let base = batch_loss(weights, batch, kind, true)?;
    let grads = base.grads.expect("gradients requested");
    let n_tensors = weights.tensors.len();
    let per_tensor = opts.per_tensor.max(MIN_CHECKED.div_ceil(n_tensors));

    let mut entries = Vec::new();
    for (name, t) in &weights.tensors {
        let mut r = rng::stream(opts.seed, 0, name);
        let k = per_tensor.min(t.len());
        for i in rng::sample_distinct(&mut r, t.len(), k) {
            entries.push((name.clone(), i));
        }
    }
    let mut analytic: Vec<f64> = entries.iter().map(|(n, i)| grads[n][*i]).collect();

    let numeric: Vec<Result<Option<f64>>> = epi_core::par::map(&entries, |(name, i)| {
        let eval = |delta: f64| -> Result<(Vec<ScoreOutput>, u64)> {
            let mut w = weights.clone();
            w.tensors.get_mut(name).expect("tensor").data[*i] += delta;
            let r = batch_loss(&w, batch, kind, false)?;
            Ok((r.preds, r.signature))
        };
        let (pp, sp) = eval(opts.step)?;
        let (pm, sm) = eval(-opts.step)?;
        if sp != base.signature || sm != base.signature {
            return Ok(None);
        }
        let mut acc = 0.0;
        for ((p, m), c) in pp.iter().zip(&pm).zip(&base.pred_grads) {
            acc += c[0] * (p.e_r - m.e_r) + c[1] * (p.e_t - m.e_t);
        }
        Ok(Some(acc / (2.0 * opts.step)))
    });

    let numeric = numeric.into_iter().collect::<Result<Vec<Option<f64>>>>()?;
    if opts.sabotage {
        let j = (0..analytic.len())
            .filter(|j| numeric[*j].is_some())
            .max_by(|a, b| analytic[*a].abs().total_cmp(&analytic[*b].abs()))
            .ok_or(FsnetError::Empty("compared gradient entries"))?;
        analytic[j] = -analytic[j];
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        tensors: n_tensors,
        max_abs_grad: 0.0,
        worst: None,
        entries: Vec::new(),
    };
    for (((name, i), a), n) in entries.iter().zip(&analytic).zip(numeric) {
        let Some(n) = n else {
            report.skipped += 1;
            continue;
        };
        report.checked += 1;
        report.max_abs_grad = report.max_abs_grad.max(a.abs());
        let e = relative_error(*a, n);
        let entry = Worst {
            tensor: name.clone(),
            index: *i,
            analytic: *a,
            numeric: n,
        };
        if e > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = Some(entry.clone());
        }
        report.entries.push(entry);
    }
    Ok(report)
}

/// A small seeded batch from one synthetic pair: `hypotheses` pool members
/// (the ground truth first) with their true errors.
pub fn synthetic_batch(config: &crate::config::NetworkConfig, seed: u64, hypotheses: usize) -> Result<TrainPair> {
    let spec = DatasetSpec {
        pool_size: hypotheses.max(2),
        seed,
        ..DatasetSpec::default()
    };
    let pair = synth_pair(&spec, 0)?;
    pair.to_train(config)
}

/// Hypotheses of `pair` with a defined translation error, ground truth first.
pub fn batch_of(pair: &TrainPair, hypotheses: usize) -> BatchItem<'_> {
    let mut c = pair.candidates();
    c.sort_by(|a, b| a.1.max_deg().total_cmp(&b.1.max_deg()));
    c.truncate(hypotheses);
    BatchItem { pair, hypotheses: c }
}
