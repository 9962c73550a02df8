//! Least-squares fit plus Levenberg-Marquardt polish on Sampson residuals.

use nalgebra::{SMatrix, SVector};

use super::scoring::{msac_gain, order_free_sum};
use super::solvers::{solve_e8, solve_f8};
use crate::criteria::sampson_or_inf;
use crate::error::Result;
use crate::geom::{
    canonicalize, CameraIntrinsics, Correspondence, EssentialMatrix, FundamentalMatrix, Mat3, Model,
};

pub const MAX_ITERATIONS: usize = 50;
pub const RELATIVE_TOLERANCE: f64 = 1e-10;
pub const MIN_INLIERS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineStatus {
    Refined,
    /// The refined model lowered the MSAC score on the inlier set and was discarded.
    KeptInput,
    TooFewInliers,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineOutcome {
    pub model: Model,
    pub status: RefineStatus,
    pub inliers: usize,
    pub iterations: usize,
}

type Mat9 = SMatrix<f64, 9, 9>;
type Vec9 = SVector<f64, 9>;

/// Maps the optimized matrix to pixel space: `F = left · P · right`.
struct Parameterization {
    left: Mat3,
    right: Mat3,
    essential: bool,
}

impl Parameterization {
    fn to_f(&self, p: &Mat3) -> Mat3 {
        self.left * p * self.right
    }

    fn project(&self, p: &Mat3) -> Option<Mat3> {
        if self.essential {
            EssentialMatrix::from_matrix(p).ok().map(|e| *e.matrix())
        } else {
            FundamentalMatrix::from_matrix(p).ok().map(|f| *f.matrix())
        }
    }

    fn cost(&self, p: &Mat3, inliers: &[Correspondence]) -> f64 {
        let f = self.to_f(p);
        order_free_sum(inliers.iter().map(|c| sampson_or_inf(&f, c)).collect())
    }

    /// Normal equations `JᵀJ`, `Jᵀr` and the cost for signed Sampson residuals.
    fn normal_equations(&self, p: &Mat3, inliers: &[Correspondence]) -> (Mat9, Vec9, f64) {
        let f = self.to_f(p);
        let mut jtj = Mat9::zeros();
        let mut jtr = Vec9::zeros();
        let mut cost = 0.0;
        for c in inliers {
            let a = c.homog_a();
            let b = c.homog_b();
            let fa = f * a;
            let ftb = f.transpose() * b;
            let e = b.dot(&fa);
            let d = fa.x * fa.x + fa.y * fa.y + ftb.x * ftb.x + ftb.y * ftb.y;
            if !(d > 0.0) {
                continue;
            }
            let sd = d.sqrt();
            let r = e / sd;
            cost += r * r;
            let grad_f = Mat3::from_fn(|j, k| {
                let de = b[j] * a[k];
                let mut dd = 0.0;
                if j < 2 {
                    dd += 2.0 * fa[j] * a[k];
                }
                if k < 2 {
                    dd += 2.0 * ftb[k] * b[j];
                }
                de / sd - e * dd / (2.0 * d * sd)
            });
            let grad_p = self.left.transpose() * grad_f * self.right.transpose();
            let jrow = Vec9::from_iterator(crate::geom::to_row_major(&grad_p));
            jtj += jrow * jrow.transpose();
            jtr += jrow * r;
        }
        (jtj, jtr, cost)
    }
}

fn levenberg_marquardt(param: &Parameterization, start: Mat3, inliers: &[Correspondence]) -> (Mat3, usize) {
    let mut p = start;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr, cost) = param.normal_equations(&p, inliers);
        if cost == 0.0 {
            break;
        }
        let diag_floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = None;
        for _ in 0..12 {
            let mut a = jtj;
            for i in 0..9 {
                a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let Some(delta) = a.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let step = Mat3::from_row_slice(delta.as_slice());
            let Some(candidate) = param.project(&(p + step)) else {
                lambda *= 10.0;
                continue;
            };
            let new_cost = param.cost(&candidate, inliers);
            if new_cost < cost {
                accepted = Some((candidate, new_cost));
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        match accepted {
            Some((candidate, new_cost)) => {
                p = candidate;
                if (cost - new_cost) / cost < RELATIVE_TOLERANCE {
                    break;
                }
            }
            None => break,
        }
    }
    (p, iterations)
}

/// Refits a hypothesis on its inliers (threshold in pixels on the Sampson
/// distance), never returning a model with a lower MSAC score on that set.
pub fn refine(
    model: &Model,
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
    threshold: f64,
) -> Result<RefineOutcome> {
    let f0 = model.to_fundamental(ka, kb)?;
    let t2 = threshold * threshold;
    let inliers: Vec<Correspondence> = corrs
        .iter()
        .filter(|c| sampson_or_inf(f0.matrix(), c) < t2)
        .copied()
        .collect();
    if inliers.len() < MIN_INLIERS {
        return Ok(RefineOutcome {
            model: *model,
            status: RefineStatus::TooFewInliers,
            inliers: inliers.len(),
            iterations: 0,
        });
    }

    let (param, start) = match model {
        Model::Fundamental(f) => (
            Parameterization {
                left: Mat3::identity(),
                right: Mat3::identity(),
                essential: false,
            },
            solve_f8(&inliers).map(|f| *f.matrix()).unwrap_or(*f.matrix()),
        ),
        Model::Essential(e) => (
            Parameterization {
                left: kb.inverse()?.transpose(),
                right: ka.inverse()?,
                essential: true,
            },
            solve_e8(&inliers, ka, kb).map(|e| *e.matrix()).unwrap_or(*e.matrix()),
        ),
    };
    let (p, iterations) = levenberg_marquardt(&param, start, &inliers);

    let refined = match model {
        Model::Fundamental(_) => Model::Fundamental(FundamentalMatrix::from_matrix(&p)?),
        Model::Essential(_) => Model::Essential(EssentialMatrix::from_matrix(&p)?),
    };
    let msac = |f: &Mat3| {
        let f = canonicalize(f).unwrap_or(*f);
        order_free_sum(inliers.iter().map(|c| msac_gain(sampson_or_inf(&f, c), threshold)).collect())
    };
    let before = msac(f0.matrix());
    let after = msac(refined.to_fundamental(ka, kb)?.matrix());
    let (model, status) = if after >= before {
        (refined, RefineStatus::Refined)
    } else {
        (*model, RefineStatus::KeptInput)
    };
    Ok(RefineOutcome {
        model,
        status,
        inliers: inliers.len(),
        iterations,
    })
}
