//! Epipolar error criteria and oracle scoring over dense ground truth.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{line_through, Correspondence, FundamentalMatrix, Mat3, Vec3};
use crate::poly;

/// Residual used to compare a correspondence against a hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// First-order reprojection error, pixels².
    Sampson,
    /// Symmetric epipolar distance, pixels.
    Sed,
    /// One-sided point-to-line distance in image B, pixels.
    Epipolar,
    /// Exact minimal reprojection correction, pixels.
    Reprojection,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Sampson,
        Criterion::Sed,
        Criterion::Epipolar,
        Criterion::Reprojection,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Sampson => "sampson",
            Criterion::Sed => "sed",
            Criterion::Epipolar => "epipolar",
            Criterion::Reprojection => "reprojection",
        }
    }

    /// Whether residuals are squared pixel distances.
    pub fn is_squared(&self) -> bool {
        matches!(self, Criterion::Sampson)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown criterion {s:?}")))
    }
}

/// Sampson distance for a raw bilinear form; `None` when both epipolar lines vanish.
#[inline]
pub fn sampson_raw(f: &Mat3, c: &Correspondence) -> Option<f64> {
    let a = c.homog_a();
    let b = c.homog_b();
    let fa = f * a;
    let ftb = f.transpose() * b;
    let num = b.dot(&fa);
    let den = fa.x * fa.x + fa.y * fa.y + ftb.x * ftb.x + ftb.y * ftb.y;
    if den > 0.0 && den.is_finite() {
        Some(num * num / den)
    } else {
        None
    }
}

/// Sampson distance, treating an indeterminate residual as infinitely bad.
#[inline]
pub fn sampson_or_inf(f: &Mat3, c: &Correspondence) -> f64 {
    sampson_raw(f, c).unwrap_or(f64::INFINITY)
}

pub fn residual(f: &FundamentalMatrix, c: &Correspondence, criterion: Criterion) -> Result<f64> {
    let m = f.matrix();
    match criterion {
        Criterion::Sampson => sampson_raw(m, c).ok_or(Error::IndeterminateResidual),
        Criterion::Epipolar => line_through(m, c.pa)
            .map(|l| l.distance(c.pb))
            .ok_or(Error::IndeterminateResidual),
        Criterion::Sed => {
            let lb = line_through(m, c.pa).ok_or(Error::IndeterminateResidual)?;
            let la = line_through(&m.transpose(), c.pb).ok_or(Error::IndeterminateResidual)?;
            Ok(lb.distance(c.pb) + la.distance(c.pa))
        }
        Criterion::Reprojection => reprojection_error(m, c),
    }
}

/// Smallest `sqrt(|δ_A|² + |δ_B|²)` such that the corrected points satisfy
/// the epipolar constraint exactly.
///
/// Both points are moved to the origin and the epipoles rotated onto the x
/// axis; the corrected points then lie on a pencil of epipolar lines indexed
/// by one parameter whose stationary costs are the real roots of a sextic.
pub fn reprojection_error(f: &Mat3, c: &Correspondence) -> Result<f64> {
    let shift = |p: [f64; 2]| Mat3::new(1.0, 0.0, p[0], 0.0, 1.0, p[1], 0.0, 0.0, 1.0);
    let f1 = shift(c.pb).transpose() * f * shift(c.pa);

    let (u, _, v) = crate::geom::svd3(&f1)?;
    let unit_epipole = |e: Vec3| -> Result<Vec3> {
        let n = e.x.hypot(e.y);
        if !(n > 1e-12 * e.norm()) {
            return Err(Error::IndeterminateResidual);
        }
        Ok(e / n)
    };
    let ea = unit_epipole(v.column(2).into_owned())?;
    let eb = unit_epipole(u.column(2).into_owned())?;
    let rot = |e: &Vec3| Mat3::new(e.x, e.y, 0.0, -e.y, e.x, 0.0, 0.0, 0.0, 1.0);
    let f2 = rot(&eb) * f1 * rot(&ea).transpose();

    let (fa, fb) = (ea.z, eb.z);
    let (a, b, cc, d) = (f2[(1, 1)], f2[(1, 2)], f2[(2, 1)], f2[(2, 2)]);

    let at_b = [b, a];
    let ct_d = [d, cc];
    let quad = poly::add(
        &poly::mul(&at_b, &at_b),
        &poly::scale(&poly::mul(&ct_d, &ct_d), fb * fb),
    );
    let one_f2t2 = [1.0, 0.0, fa * fa];
    let lhs = poly::mul(&[0.0, 1.0], &poly::mul(&quad, &quad));
    let rhs = poly::scale(
        &poly::mul(
            &poly::mul(&one_f2t2, &one_f2t2),
            &poly::mul(&at_b, &ct_d),
        ),
        a * d - b * cc,
    );
    let g = poly::add(&lhs, &poly::scale(&rhs, -1.0));

    let cost = |t: f64| -> f64 {
        let den = (a * t + b).powi(2) + fb * fb * (cc * t + d).powi(2);
        if !(den > 0.0) {
            return f64::INFINITY;
        }
        t * t / (1.0 + fa * fa * t * t) + (cc * t + d).powi(2) / den
    };

    let mut best = {
        let den = a * a + fb * fb * cc * cc;
        let first = if fa == 0.0 { f64::INFINITY } else { 1.0 / (fa * fa) };
        if den > 0.0 { first + cc * cc / den } else { f64::INFINITY }
    };
    best = best.min(cost(0.0));
    // Real parts of every root are admissible candidates: any real t is a
    // feasible correction, so extra candidates can only tighten the minimum.
    for (re, _) in poly::roots(&g) {
        best = best.min(cost(re));
    }
    if !best.is_finite() {
        return Err(Error::IndeterminateResidual);
    }
    Ok(best.max(0.0).sqrt())
}

/// How dense residuals are aggregated into one oracle score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "cap")]
pub enum Aggregate {
    Mean,
    Median,
    /// Residuals are clamped at `cap` pixels (`cap²` for squared criteria) before averaging.
    TruncatedMean(f64),
}

impl Default for Aggregate {
    fn default() -> Self {
        Aggregate::TruncatedMean(10.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleScore {
    /// Aggregate residual; lower is better.
    pub value: f64,
    pub criterion: Criterion,
    pub aggregate: Aggregate,
}

/// Aggregated residual of `f` over dense ground-truth correspondences.
///
/// Indeterminate residuals (a point on an epipole) are left out of the aggregate.
pub fn oracle_score(
    f: &FundamentalMatrix,
    dense: &[Correspondence],
    criterion: Criterion,
    aggregate: Aggregate,
) -> Result<OracleScore> {
    if dense.is_empty() {
        return Err(Error::Empty("dense correspondence set"));
    }
    let mut values: Vec<f64> = dense
        .iter()
        .filter_map(|c| residual(f, c, criterion).ok())
        .collect();
    if values.is_empty() {
        return Err(Error::IndeterminateResidual);
    }
    values.sort_by(f64::total_cmp);
    let value = match aggregate {
        Aggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregate::Median => crate::metrics::median_sorted(&values),
        Aggregate::TruncatedMean(cap) => {
            let cap = if criterion.is_squared() { cap * cap } else { cap };
            values.iter().map(|v| v.min(cap)).sum::<f64>() / values.len() as f64
        }
    };
    Ok(OracleScore {
        value,
        criterion,
        aggregate,
    })
}
