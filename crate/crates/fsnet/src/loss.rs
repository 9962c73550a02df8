//! Training objectives on `(e_R, e_t)` predictions, each returning the value
//! and its gradient with respect to the prediction.

use epi_core::geom::PoseError;

use crate::error::{FsnetError, Result};
use crate::model::ScoreOutput;

/// Hypotheses with `max(e_R, e_t)` below this are labeled correct.
pub const CORRECT_DEG: f64 = 10.0;
/// Temperature of the confidence derived from predicted errors.
pub const CONFIDENCE_SCALE_DEG: f64 = 20.0;
pub const CONFIDENCE_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    SoftL1,
    WeightedCe,
}

impl std::str::FromStr for LossKind {
    type Err = FsnetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft-l1" => Ok(LossKind::SoftL1),
            "weighted-ce" => Ok(LossKind::WeightedCe),
            _ => Err(FsnetError::Config(format!("unknown loss {s:?} (expected soft-l1 or weighted-ce)"))),
        }
    }
}

/// Loss value and `(∂/∂e_R, ∂/∂e_t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: [f64; 2],
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Ground truth `(e_R, e_t)`; an undefined translation is rejected.
pub fn target(gt: &PoseError) -> Result<[f64; 2]> {
    match gt.trans_deg {
        Some(t) => Ok([gt.rot_deg, t]),
        None => Err(FsnetError::Config("ground-truth translation error is undefined".into())),
    }
}

/// `|tanh(ē_t/t_s) − tanh(e_t/t_s)| + |tanh(ē_R/t_s) − tanh(e_R/t_s)|`.
pub fn loss_soft_l1(pred: &ScoreOutput, gt: &PoseError, t_s: f64) -> Result<LossValue> {
    let gt = target(gt)?;
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    for (i, p) in [pred.e_r, pred.e_t].into_iter().enumerate() {
        let (gp, gg) = ((p / t_s).tanh(), (gt[i] / t_s).tanh());
        value += (gp - gg).abs();
        grad[i] = sign(gp - gg) * (1.0 - gp * gp) / t_s;
    }
    Ok(LossValue { value, grad })
}

/// Confidence in `(0, 1)` derived from the predicted errors.
pub fn confidence(pred: &ScoreOutput) -> (f64, [f64; 2]) {
    let raw = (-(pred.e_r + pred.e_t) / CONFIDENCE_SCALE_DEG).exp();
    let f = raw.clamp(CONFIDENCE_CLAMP, 1.0 - CONFIDENCE_CLAMP);
    let d = if f == raw { -raw / CONFIDENCE_SCALE_DEG } else { 0.0 };
    (f, [d, d])
}

/// `−(1 + f)^w · [y log f + (1 − y) log(1 − f)]` and `∂/∂f`.
pub fn weighted_ce(f: f64, label: bool, w_exp: f64) -> (f64, f64) {
    let f = f.clamp(CONFIDENCE_CLAMP, 1.0 - CONFIDENCE_CLAMP);
    let y = if label { 1.0 } else { 0.0 };
    let ll = y * f.ln() + (1.0 - y) * (1.0 - f).ln();
    let dll = y / f - (1.0 - y) / (1.0 - f);
    let weight = (1.0 + f).powf(w_exp);
    let dweight = if w_exp == 0.0 { 0.0 } else { w_exp * (1.0 + f).powf(w_exp - 1.0) };
    (-weight * ll, -(dweight * ll + weight * dll))
}

/// Weighted cross-entropy on the confidence of a prediction, labeled by the
/// ground-truth pose error.
pub fn loss_weighted_ce(pred: &ScoreOutput, gt: &PoseError, w_exp: f64) -> Result<LossValue> {
    let gt = target(gt)?;
    let label = gt[0].max(gt[1]) < CORRECT_DEG;
    let (f, df) = confidence(pred);
    let (value, dl) = weighted_ce(f, label, w_exp);
    Ok(LossValue {
        value,
        grad: [dl * df[0], dl * df[1]],
    })
}

/// Exponent of the confidence weight used in training.
pub const CE_WEIGHT_EXP: f64 = 2.0;

pub fn loss(kind: LossKind, pred: &ScoreOutput, gt: &PoseError, t_s: f64) -> Result<LossValue> {
    match kind {
        LossKind::SoftL1 => loss_soft_l1(pred, gt, t_s),
        LossKind::WeightedCe => loss_weighted_ce(pred, gt, CE_WEIGHT_EXP),
    }
}
