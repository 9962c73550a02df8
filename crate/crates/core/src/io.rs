//! Versioned JSON-lines records exchanged between pipeline stages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Correspondence;
use crate::synth::{PairSpec, SceneConfig, SyntheticScene};

pub const SCENE_SCHEMA: &str = "epi-scene/1";
pub const PAIR_SCHEMA: &str = "epi-pair/1";
pub const SCORES_SCHEMA: &str = "epi-scores/1";
pub use crate::robust::POOL_SCHEMA;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: schema {found:?}, expected {expected:?}")]
    Schema {
        path: String,
        line: usize,
        found: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A record carrying its schema tag.
pub trait Versioned {
    const SCHEMA: &'static str;
    fn schema(&self) -> &str;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub schema: String,
    pub scene_id: u64,
    pub seed: u64,
    pub config: SceneConfig,
    pub scene: SyntheticScene,
}

/// A pair carries its scene so downstream stages need only this file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub schema: String,
    pub pair_id: u64,
    pub scene_id: u64,
    pub seed: u64,
    pub spec: PairSpec,
    pub scene: SyntheticScene,
    pub correspondences: Vec<Correspondence>,
    pub inlier_mask: Vec<bool>,
}

/// Per-hypothesis scores for one pair; higher is better.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoresRecord {
    pub schema: String,
    pub pair_id: u64,
    pub method: String,
    pub threshold: f64,
    pub values: Vec<f64>,
}

macro_rules! versioned {
    ($t:ty, $s:expr) => {
        impl Versioned for $t {
            const SCHEMA: &'static str = $s;
            fn schema(&self) -> &str {
                &self.schema
            }
        }
    };
}

versioned!(SceneRecord, SCENE_SCHEMA);
versioned!(PairRecord, PAIR_SCHEMA);
versioned!(ScoresRecord, SCORES_SCHEMA);
versioned!(crate::robust::PoolRecord, POOL_SCHEMA);

#[derive(Deserialize)]
struct SchemaOnly {
    schema: Option<String>,
}

/// Reads every record of a JSON-lines file, rejecting foreign schemas before parsing the body.
pub fn read_jsonl<T: DeserializeOwned + Versioned>(path: &Path) -> Result<Vec<T>, IoError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| IoError::Open {
        path: display.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| IoError::Parse {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        };
        let head: SchemaOnly = serde_json::from_str(&line).map_err(parse_err)?;
        let found = head.schema.unwrap_or_default();
        if found != T::SCHEMA {
            return Err(IoError::Schema {
                path: display,
                line: i + 1,
                found,
                expected: T::SCHEMA,
            });
        }
        out.push(serde_json::from_str(&line).map_err(parse_err)?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
