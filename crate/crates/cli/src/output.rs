use anyhow::Result;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Format;
use crate::manifest::{GraphProvenance, RunManifest};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip formatting, so CSV output is deterministic and lossless.
pub fn num<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

/// What a command produced, before it is wrapped with its manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub table: Table,
    pub checks: Vec<Check>,
    pub seeds: Vec<u64>,
    pub graphs: Vec<GraphProvenance>,
    pub constants: Value,
}

impl Outcome {
    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| !c.passed)
    }
}

pub fn render(format: Format, manifest: &RunManifest, outcome: &Outcome) -> Result<Vec<u8>> {
    let hash = manifest.hash();
    match format {
        Format::Json => {
            let env = json!({
                "manifest_hash": hash,
                "manifest": manifest,
                "checks": outcome.checks,
                "result": outcome.result,
            });
            let mut bytes = serde_json::to_vec_pretty(&env)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        Format::Csv => {
            let mut bytes = format!("#manifest={hash}\n").into_bytes();
            for c in &outcome.checks {
                bytes.extend(format!("#check={},{}\n", c.name, if c.passed { "pass" } else { "fail" }).bytes());
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&outcome.table.headers)?;
            for row in &outcome.table.rows {
                w.write_record(row)?;
            }
            bytes.extend(w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?);
            Ok(bytes)
        }
    }
}
