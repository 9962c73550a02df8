//! Hypothesis generation and classical scoring.

pub mod degeneracy;
pub mod pool;
pub mod refine;
pub mod scoring;
pub mod solvers;

pub use degeneracy::{degeneracy_check, Degeneracy, DegeneracyReport};
pub use pool::{generate_pool, HypothesisPool, PoolRecord, POOL_SCHEMA};
pub use refine::{refine, RefineOutcome, RefineStatus};
pub use scoring::{score, score_pool, select_best, select_best_values, Method, Score, ScoreRecord};
pub use solvers::{solve_minimal, Solver};
