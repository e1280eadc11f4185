use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::args::{Command, Format};

pub const SCHEMA_VERSION: u32 = 1;

/// Where a run's graphs came from.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum GraphProvenance {
    File { path: PathBuf, sha256: String, n: usize, d: usize },
    Named { name: String, n: usize, d: usize },
    Generated { d: usize, n: usize, graph_seed: u64, sha256: String },
    Audited { d: usize, n: usize, requested_seed: u64, graph_seed: u64, attempts: usize, sha256: String },
    /// One rung of a ladder experiment; its seed is derived from the ladder seed.
    Rung { rung: usize, d: usize, n: usize, graph_seed: u64, attempts: usize, sha256: String },
}

/// Everything needed to replay a run, plus the constants it derived. The
/// worker count and the output path are deliberately absent.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub format: Format,
    pub command: Command,
    /// sha256 of the canonical JSON of `command`.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub graphs: Vec<GraphProvenance>,
    /// Derived constants (c0, s_n, r_n, R_n, γ_h, t_n, M_n, ĥ⋆, ...).
    pub constants: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Compact JSON with object keys sorted, the form that gets hashed.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("value serialises");
    serde_json::to_vec(&v).expect("value serialises")
}

impl RunManifest {
    pub fn new(format: Format, command: Command, seeds: Vec<u64>, graphs: Vec<GraphProvenance>, constants: Value) -> Self {
        let config = canonical_json(&command);
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: SCHEMA_VERSION,
            format,
            config_hash: sha256_hex(&config),
            command,
            seeds,
            graphs,
            constants,
        }
    }

    pub fn hash(&self) -> String {
        sha256_hex(&canonical_json(self))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Sidecar paths next to an output file.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
