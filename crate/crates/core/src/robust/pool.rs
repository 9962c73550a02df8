use serde::{Deserialize, Serialize};

use super::solvers::{solve_minimal, Solver};
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Correspondence, Model, ModelKind};
use crate::rng;

/// Ordered hypotheses with the minimal sample that produced each one.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisPool {
    pub model_kind: ModelKind,
    pub hypotheses: Vec<Model>,
    /// Sample indices per hypothesis; empty for injected hypotheses.
    pub provenance: Vec<Vec<usize>>,
    pub seed: u64,
}

impl HypothesisPool {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// Inserts an externally supplied hypothesis (e.g. the ground truth) at `index`.
    pub fn inject(&mut self, index: usize, model: Model) -> Result<()> {
        if model.kind() != self.model_kind {
            return Err(Error::InvalidArgument("injected model kind differs from the pool".into()));
        }
        if index > self.hypotheses.len() {
            return Err(Error::InvalidArgument(format!("injection index {index} out of range")));
        }
        self.hypotheses.insert(index, model);
        self.provenance.insert(index, Vec::new());
        Ok(())
    }

    /// Replaces the hypothesis at `index`, keeping the pool size.
    pub fn replace(&mut self, index: usize, model: Model) -> Result<()> {
        if model.kind() != self.model_kind || index >= self.hypotheses.len() {
            return Err(Error::InvalidArgument(format!("cannot replace hypothesis {index}")));
        }
        self.hypotheses[index] = model;
        self.provenance[index].clear();
        Ok(())
    }

    /// The pool for the swapped image pair (every matrix transposed).
    pub fn transposed(&self) -> Self {
        let hypotheses = self
            .hypotheses
            .iter()
            .map(|m| match m {
                Model::Fundamental(f) => Model::Fundamental(f.transpose()),
                Model::Essential(e) => Model::Essential(e.transpose()),
            })
            .collect();
        Self {
            hypotheses,
            ..self.clone()
        }
    }
}

/// On-disk pool record, one JSON object per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub schema: String,
    pub pair_id: u64,
    pub model_kind: ModelKind,
    pub seed: u64,
    pub hypotheses: Vec<[f64; 9]>,
    pub provenance: Vec<Vec<usize>>,
}

pub const POOL_SCHEMA: &str = "epi-pool/1";

impl PoolRecord {
    pub fn from_pool(pair_id: u64, pool: &HypothesisPool) -> Self {
        Self {
            schema: POOL_SCHEMA.to_string(),
            pair_id,
            model_kind: pool.model_kind,
            seed: pool.seed,
            hypotheses: pool.hypotheses.iter().map(Model::to_row_major).collect(),
            provenance: pool.provenance.clone(),
        }
    }

    pub fn to_pool(&self) -> Result<HypothesisPool> {
        if self.schema != POOL_SCHEMA {
            return Err(Error::InvalidArgument(format!(
                "pool schema {:?} is not {POOL_SCHEMA:?}",
                self.schema
            )));
        }
        if self.provenance.len() != self.hypotheses.len() {
            return Err(Error::InvalidArgument("provenance length differs from hypothesis count".into()));
        }
        let hypotheses = self
            .hypotheses
            .iter()
            .map(|h| Model::from_row_major(self.model_kind, h))
            .collect::<Result<Vec<_>>>()?;
        Ok(HypothesisPool {
            model_kind: self.model_kind,
            hypotheses,
            provenance: self.provenance.clone(),
            seed: self.seed,
        })
    }
}

/// Fills a pool with exactly `n` hypotheses from uniformly drawn minimal samples.
///
/// The sample stream is `rng::stream(seed, 0, "pool")`, so the pool is a pure
/// function of `(corrs, n, solver, seed)`. Every solution of a successful
/// solve is appended until the pool is full; degenerate samples are skipped.
pub fn generate_pool(
    corrs: &[Correspondence],
    n: usize,
    solver: Solver,
    seed: u64,
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
) -> Result<HypothesisPool> {
    let k = solver.sample_size();
    if corrs.len() < k {
        return Err(Error::NotEnoughCorrespondences {
            needed: k,
            got: corrs.len(),
        });
    }
    let mut rng = rng::stream(seed, 0, "pool");
    let mut pool = HypothesisPool {
        model_kind: solver.model_kind(),
        hypotheses: Vec::with_capacity(n),
        provenance: Vec::with_capacity(n),
        seed,
    };
    let max_attempts = 100 * n.max(1);
    let mut attempts = 0;
    let mut skipped = 0;
    while pool.hypotheses.len() < n {
        if attempts >= max_attempts {
            return Err(Error::PoolExhausted {
                produced: pool.hypotheses.len(),
                wanted: n,
                attempts,
            });
        }
        attempts += 1;
        let idx = rng::sample_distinct(&mut rng, corrs.len(), k);
        let sample: Vec<Correspondence> = idx.iter().map(|&i| corrs[i]).collect();
        match solve_minimal(&sample, solver, ka, kb) {
            Ok(models) => {
                for m in models {
                    if pool.hypotheses.len() == n {
                        break;
                    }
                    pool.hypotheses.push(m);
                    pool.provenance.push(idx.clone());
                }
            }
            Err(e) => {
                skipped += 1;
                log::debug!("pool seed {seed}: skipped sample {idx:?}: {e}");
            }
        }
    }
    if skipped > 0 {
        log::debug!("pool seed {seed}: {skipped} degenerate samples skipped");
    }
    Ok(pool)
}
