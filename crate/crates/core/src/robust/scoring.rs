//! Correspondence-based hypothesis scores. Higher is better for every method.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::criteria::sampson_or_inf;
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Correspondence, FundamentalMatrix, Mat3};
use crate::par;

use super::pool::HypothesisPool;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Inlier count.
    Ransac,
    /// Truncated-quadratic gain `Σ max(0, 1 - r²/θ²)`.
    Msac,
    /// MSAC averaged over a log-spaced threshold grid.
    Marginalized,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ransac => "ransac",
            Method::Msac => "msac",
            Method::Marginalized => "marginalized",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ransac" => Ok(Method::Ransac),
            "msac" => Ok(Method::Msac),
            "marginalized" => Ok(Method::Marginalized),
            _ => Err(Error::InvalidArgument(format!("unknown scoring method {s:?}"))),
        }
    }
}

/// Number of thresholds in the marginalized grid.
pub const MARGINAL_STEPS: usize = 8;

/// Log-spaced thresholds from `θ/4` to `4θ`.
pub fn marginal_thresholds(threshold: f64) -> [f64; MARGINAL_STEPS] {
    let mut out = [0.0; MARGINAL_STEPS];
    for (k, t) in out.iter_mut().enumerate() {
        *t = threshold / 4.0 * 16f64.powf(k as f64 / (MARGINAL_STEPS - 1) as f64);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub value: f64,
    /// Set when there were no correspondences to score against.
    pub empty_input: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub hypothesis_index: usize,
    pub value: f64,
    pub method: String,
}

/// Sum whose result does not depend on the order of `values`.
pub(crate) fn order_free_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Score of one gain function applied per correspondence.
fn gain_sum(f: &Mat3, corrs: &[Correspondence], gain: impl Fn(f64) -> f64) -> f64 {
    order_free_sum(corrs.iter().map(|c| gain(sampson_or_inf(f, c))).collect())
}

/// MSAC gain of a Sampson residual `r2` (pixels²) at threshold `theta`.
#[inline]
pub fn msac_gain(r2: f64, theta: f64) -> f64 {
    (1.0 - r2 / (theta * theta)).max(0.0)
}

pub fn score(
    f: &FundamentalMatrix,
    corrs: &[Correspondence],
    method: Method,
    threshold: f64,
) -> Result<Score> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    if corrs.is_empty() {
        log::warn!("scoring against an empty correspondence set");
        return Ok(Score {
            value: 0.0,
            empty_input: true,
        });
    }
    let m = f.matrix();
    let t2 = threshold * threshold;
    let value = match method {
        Method::Ransac => corrs.iter().filter(|c| sampson_or_inf(m, c) < t2).count() as f64,
        Method::Msac => gain_sum(m, corrs, |r2| msac_gain(r2, threshold)),
        Method::Marginalized => {
            let grid = marginal_thresholds(threshold);
            gain_sum(m, corrs, |r2| {
                grid.iter().map(|&t| msac_gain(r2, t)).sum::<f64>() / MARGINAL_STEPS as f64
            })
        }
    };
    Ok(Score {
        value,
        empty_input: false,
    })
}

/// Scores every hypothesis of a pool; essential hypotheses are scored through
/// their pixel-space fundamental matrix so thresholds stay in pixels.
pub fn score_pool(
    pool: &HypothesisPool,
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
    method: Method,
    threshold: f64,
) -> Result<Vec<ScoreRecord>> {
    let fs = pool
        .hypotheses
        .iter()
        .map(|m| m.to_fundamental(ka, kb))
        .collect::<Result<Vec<_>>>()?;
    let values = par::map(&fs, |f| score(f, corrs, method, threshold).map(|s| s.value));
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.map(|value| ScoreRecord {
                hypothesis_index: i,
                value,
                method: method.name().to_string(),
            })
        })
        .collect()
}

/// Index of the highest score; ties go to the lowest index, NaN never wins.
pub fn select_best_values(values: &[f64]) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::Empty("hypothesis pool"));
    }
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        let cur = values[best];
        if *v > cur || (cur.is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    Ok(best)
}

/// Deterministic argmax over a pool's score records.
pub fn select_best(pool: &HypothesisPool, records: &[ScoreRecord]) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::Empty("hypothesis pool"));
    }
    let mut values = vec![f64::NAN; pool.len()];
    let mut seen = vec![false; pool.len()];
    for r in records {
        if r.hypothesis_index >= pool.len() {
            return Err(Error::InvalidArgument(format!(
                "score record index {} outside pool of {}",
                r.hypothesis_index,
                pool.len()
            )));
        }
        values[r.hypothesis_index] = r.value;
        seen[r.hypothesis_index] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidArgument("score records do not cover the pool".into()));
    }
    select_best_values(&values)
}
