use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use epi_core::eval::{FilterMode, ModalityRule};
use epi_fsnet::loss::LossKind;
use epi_fsnet::train::TrainHyper;

use crate::error::{CliError, Result};
use crate::stages::{self, CorrCount, ScoreMethod};

#[derive(Debug, Parser)]
#[command(name = "epi", version, about = "Two-view hypothesis scoring pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes.
    GenScenes(GenScenesArgs),
    /// Sample noisy correspondences with outliers for each scene.
    GenPairs(GenPairsArgs),
    /// Build hypothesis pools from minimal samples.
    GenPool(GenPoolArgs),
    /// Score every pool hypothesis with one method.
    Score(ScoreArgs),
    /// Train the learned scorer on pairs and pools.
    Train(TrainArgs),
    /// Select hypotheses per scorer and write the evaluation report.
    Eval(EvalArgs),
    /// Compare reverse-mode gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenScenesArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.10)]
    pub overlap_min: f64,
    #[arg(long, default_value_t = 0.40)]
    pub overlap_max: f64,
    /// Square image size in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenPairsArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub noise_px: f64,
    #[arg(long, default_value_t = 0.3)]
    pub outlier_rate: f64,
    /// Correspondences per pair: N, or LO..HI drawn per pair.
    #[arg(long, default_value = "200")]
    pub n_corr: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenPoolArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// f or e.
    #[arg(long, default_value = "f")]
    pub model: String,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// f7, f8 or e8.
    #[arg(long, default_value = "f7")]
    pub solver: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Put the ground-truth model into a seeded slot of every pool.
    #[arg(long)]
    pub with_gt: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// ransac, msac, marginalized, oracle-sampson, oracle-pose or fsnet.
    #[arg(long)]
    pub method: String,
    /// Inlier threshold in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    /// Weights file, for --method fsnet.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub pools: PathBuf,
    /// desk or full.
    #[arg(long, default_value = "desk")]
    pub config: String,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pairs per step.
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    /// Hypotheses per pair and step.
    #[arg(long, default_value_t = 8)]
    pub hypotheses: usize,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Global gradient-norm cap.
    #[arg(long)]
    pub clip: Option<f64>,
    /// soft-l1 or weighted-ce.
    #[arg(long, default_value = "soft-l1")]
    pub loss: String,
    /// constant or cosine.
    #[arg(long, default_value = "constant")]
    pub schedule: String,
    /// Weights file; the log goes beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scores file, optionally as NAME=PATH; repeat for several scorers.
    #[arg(long, required = true)]
    pub scores: Vec<String>,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub pools: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub maa_max: f64,
    /// none, corresp or candidate.
    #[arg(long, default_value = "none")]
    pub filter: String,
    /// Candidates kept by the candidate filter (10 for F pools, 20 for E).
    #[arg(long)]
    pub k: Option<usize>,
    /// Base scorer of the filter; the first --scores by default.
    #[arg(long)]
    pub base: Option<String>,
    /// Rescorer of the filter; the second --scores by default.
    #[arg(long)]
    pub rescorer: Option<String>,
    /// Refine selected hypotheses before measuring errors.
    #[arg(long)]
    pub refine: bool,
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    /// max-pairwise or min-max-difference.
    #[arg(long, default_value = "max-pairwise")]
    pub modality_rule: String,
    /// Report JSON; rows and histogram CSVs go beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "desk")]
    pub config: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// soft-l1, weighted-ce or both.
    #[arg(long, default_value = "both")]
    pub loss: String,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

fn parse_loss(s: &str) -> Result<LossKind> {
    s.parse().map_err(|e: epi_fsnet::FsnetError| CliError::Usage(e.to_string()))
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

impl GenScenesArgs {
    pub fn resolve(&self) -> Result<stages::GenScenes> {
        Ok(stages::GenScenes {
            n: self.n,
            seed: self.seed,
            overlap: (self.overlap_min, self.overlap_max),
            size: self.size,
            out: self.out.clone(),
        })
    }
}

impl GenPairsArgs {
    pub fn resolve(&self) -> Result<stages::GenPairs> {
        if !(0.0..1.0).contains(&self.outlier_rate) || !(self.noise_px >= 0.0) {
            return Err(CliError::Usage("need 0 <= --outlier-rate < 1 and --noise-px >= 0".into()));
        }
        Ok(stages::GenPairs {
            scenes: self.scenes.clone(),
            noise_px: self.noise_px,
            outlier_rate: self.outlier_rate,
            n_corr: self.n_corr.parse::<CorrCount>()?,
            seed: self.seed,
            out: self.out.clone(),
        })
    }
}

impl GenPoolArgs {
    pub fn resolve(&self) -> Result<stages::GenPool> {
        Ok(stages::GenPool {
            pairs: self.pairs.clone(),
            model: stages::parse_model_kind(&self.model)?,
            n: self.n,
            solver: self.solver.parse().map_err(usage)?,
            seed: self.seed,
            with_gt: self.with_gt,
            out: self.out.clone(),
        })
    }
}

impl ScoreArgs {
    pub fn resolve(&self) -> Result<stages::Score> {
        Ok(stages::Score {
            pool: self.pool.clone(),
            pairs: self.pairs.clone(),
            method: self.method.parse::<ScoreMethod>()?,
            threshold: self.threshold,
            weights: self.weights.clone(),
            out: self.out.clone(),
        })
    }
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<stages::Train> {
        if !(self.lr > 0.0) || self.batch == 0 || self.hypotheses == 0 {
            return Err(CliError::Usage("--lr, --batch and --hypotheses must be positive".into()));
        }
        Ok(stages::Train {
            pairs: self.pairs.clone(),
            pools: self.pools.clone(),
            config: self.config.clone(),
            hyper: TrainHyper {
                lr: self.lr,
                batch: self.batch,
                hypotheses_per_pair: self.hypotheses,
                steps: self.steps,
                seed: self.seed,
                momentum: self.momentum,
                clip: self.clip,
                loss: parse_loss(&self.loss)?,
                schedule: self.schedule.parse().map_err(usage)?,
            },
            out: self.out.clone(),
        })
    }
}

impl EvalArgs {
    pub fn resolve(&self) -> Result<stages::Eval> {
        let scores = self
            .scores
            .iter()
            .map(|s| match s.split_once('=') {
                Some((n, p)) => (Some(n.to_string()), PathBuf::from(p)),
                None => (None, PathBuf::from(s)),
            })
            .collect();
        let filter = match self.filter.as_str() {
            "none" => None,
            f => Some(f.parse::<FilterMode>().map_err(usage)?),
        };
        let modality_rule = match self.modality_rule.as_str() {
            "max-pairwise" => ModalityRule::MaxPairwise,
            "min-max-difference" => ModalityRule::MinMaxDifference,
            r => return Err(CliError::Usage(format!("unknown modality rule {r:?}"))),
        };
        if !(self.maa_max >= 1.0) {
            return Err(CliError::Usage("--maa-max must be at least 1".into()));
        }
        Ok(stages::Eval {
            scores,
            pairs: self.pairs.clone(),
            pools: self.pools.clone(),
            maa_max: self.maa_max,
            filter,
            k: self.k,
            base: self.base.clone(),
            rescorer: self.rescorer.clone(),
            refine: self.refine,
            threshold: self.threshold,
            modality_rule,
            out: self.out.clone(),
        })
    }
}

impl GradcheckArgs {
    pub fn resolve(&self) -> Result<stages::GradCheck> {
        let losses = match self.loss.as_str() {
            "both" => vec![LossKind::SoftL1, LossKind::WeightedCe],
            l => vec![parse_loss(l)?],
        };
        Ok(stages::GradCheck {
            config: self.config.clone(),
            seed: self.seed,
            losses,
            tolerance: self.tolerance,
        })
    }
}
