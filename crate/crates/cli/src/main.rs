mod args;
mod manifest;
mod output;
mod run;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::json;

use args::{Cli, Command, Format, TopCommand};
use manifest::{sidecar, RunManifest};

const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_ERROR: u8 = 1;

/// Runs a command and returns its manifest, rendered output and whether a check failed.
fn produce(command: Command, format: Format) -> Result<(RunManifest, Vec<u8>, bool)> {
    let outcome = run::execute(&command)?;
    let manifest = RunManifest::new(format, command, outcome.seeds.clone(), outcome.graphs.clone(), outcome.constants.clone());
    let bytes = output::render(format, &manifest, &outcome)?;
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("gffperc: check {} failed: {}", c.name, c.detail);
    }
    Ok((manifest, bytes, outcome.failed()))
}

fn emit(out: Option<&Path>, manifest: &RunManifest, bytes: &[u8], seconds: f64, threads: usize) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
            let mut m = serde_json::to_vec_pretty(manifest)?;
            m.push(b'\n');
            std::fs::write(sidecar(path, ".manifest.json"), m)?;
            let timing = json!({ "manifest_hash": manifest.hash(), "seconds": seconds, "threads": threads });
            std::fs::write(sidecar(path, ".timing.json"), serde_json::to_vec_pretty(&timing)?)?;
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    let threads = rayon::current_num_threads();
    let start = Instant::now();
    let (manifest, bytes, failed) = match cli.command {
        TopCommand::Run(command) => {
            let format = if cli.csv { Format::Csv } else { Format::Json };
            produce(command, format)?
        }
        TopCommand::Replay { manifest } => {
            let stored = RunManifest::read(&manifest)?;
            let (m, bytes, failed) = produce(stored.command.clone(), stored.format)?;
            let same = m.hash() == stored.hash();
            if !same {
                eprintln!("gffperc: replay manifest hash {} differs from the stored {}", m.hash(), stored.hash());
            }
            (m, bytes, failed || !same)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    emit(cli.out.as_deref(), &manifest, &bytes, seconds, threads)?;
    eprintln!("gffperc: manifest {} in {seconds:.3} s on {threads} threads", manifest.hash());
    Ok(failed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("gffperc: error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
