//! Run manifests written beside every stage output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const MANIFEST_SCHEMA: &str = "epi-manifest/1";
/// Field left out when comparing manifests of reruns.
pub const TIMESTAMP_FIELD: &str = "timestamp_unix";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    /// FNV-1a of the file contents, hex.
    pub fnv64: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub command: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    /// Hashes of the configuration blocks that shaped the outputs.
    pub config_hashes: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timestamp_unix: u64,
}

pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hash of a serializable configuration, via its JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(format!("{:016x}", fnv64(&serde_json::to_vec(value)?)))
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path)?;
    Ok(FileDigest {
        path: path.display().to_string(),
        fnv64: format!("{:016x}", fnv64(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

impl RunManifest {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command,
            seeds: BTreeMap::new(),
            config_hashes: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.into(), seed);
        self
    }

    pub fn config<T: Serialize>(mut self, name: &str, value: &T) -> Result<Self> {
        self.config_hashes.insert(name.into(), config_hash(value)?);
        Ok(self)
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push(digest(path)?);
        Ok(self)
    }

    /// Records the outputs and writes the manifest beside the first one.
    pub fn finish(mut self, outputs: &[&Path]) -> Result<PathBuf> {
        for p in outputs {
            self.outputs.push(digest(p)?);
        }
        let path = manifest_path(outputs[0]);
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Manifest JSON with the timestamp removed, for rerun comparisons.
pub fn without_timestamp(text: &str) -> Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_str(text)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove(TIMESTAMP_FIELD);
    }
    Ok(v)
}
