//! Batch front end behind the `resonator-q` binary.
//!
//! Every run reads one JSON config, computes in memory, and only then
//! writes its outputs (a `report.json` plus command-specific CSV/JSON
//! files) into the output directory. Failures leave the directory
//! untouched and print a machine-readable error on stderr.

mod commands;
pub mod config;
pub mod error;
pub mod sweep;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::RunConfig;
pub use error::{CliError, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "resonator-q", version, about = "Mechanical dissipation modeling for optomechanical resonators")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Check the config and inputs, then exit without computing.
    #[arg(long, global = true)]
    pub validate_only: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit the coupled-mode model to an undercut dispersion dataset.
    FitCrossing,
    /// Clamping-loss sweep over a geometry parameter and/or D-Q calibration.
    Clamping,
    /// Fit TLS parameters and a clamping background to Q(T).
    IntrinsicFit,
    /// Back-action and cooling budget of a design.
    Budget,
    /// Lorentzian fits of displacement spectra.
    SpectrumFit,
    /// Piecewise gas-damping fit of Q(p).
    GasFit,
    /// Axisymmetric modal analysis of one geometry.
    SolveModes,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FitCrossing => "fit-crossing",
            Command::Clamping => "clamping",
            Command::IntrinsicFit => "intrinsic-fit",
            Command::Budget => "budget",
            Command::SpectrumFit => "spectrum-fit",
            Command::GasFit => "gas-fit",
            Command::SolveModes => "solve-modes",
        }
    }
}

/// Everything a command produces, held in memory until the run succeeds.
#[derive(Debug, Default)]
pub struct CommandOutput {
    pub results: serde_json::Value,
    pub warnings: Vec<String>,
    /// `(file name, contents)` written into the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    /// Human-readable summary for stdout.
    pub summary: Option<String>,
}

impl CommandOutput {
    pub fn file(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub version: &'static str,
    /// Effective configuration; rerunning it reproduces the results.
    pub config: serde_json::Value,
    /// SHA-256 of the serialized effective configuration.
    pub config_hash: String,
    pub results: serde_json::Value,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    /// Excluded from determinism comparisons.
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// What a successful invocation did.
#[derive(Debug)]
pub enum Outcome {
    Validated { command: &'static str },
    Completed { report_path: PathBuf, summary: Option<String> },
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let (mut cfg, base_dir) = match &cli.config {
        Some(path) => (config::load(path)?, path.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (RunConfig::default(), PathBuf::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    let out_dir = cli.out.clone().or_else(|| cfg.out.as_ref().map(|o| base_dir.join(o))).unwrap_or_else(|| PathBuf::from("results"));
    cfg.resolve_paths(&base_dir);
    cfg.out = None;

    let prepared = commands::prepare(cli.command, &cfg)?;
    if cli.validate_only {
        return Ok(Outcome::Validated { command: cli.command.name() });
    }
    let output = commands::execute(prepared, &cfg)?;

    let config_json = cfg.echo(cli.command);
    let config_bytes = serde_json::to_vec(&config_json).map_err(CliError::internal)?;
    let mut outputs: Vec<String> = output.files.iter().map(|f| f.0.clone()).collect();
    outputs.push("report.json".into());
    let report = RunReport {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: config_json,
        config_hash: sha256_hex(&config_bytes),
        results: output.results,
        warnings: output.warnings,
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mut report_bytes = serde_json::to_vec_pretty(&report).map_err(CliError::internal)?;
    report_bytes.push(b'\n');
    let mut files = output.files;
    files.push(("report.json".into(), report_bytes));
    write_outputs(&out_dir, &files)?;
    Ok(Outcome::Completed { report_path: out_dir.join("report.json"), summary: output.summary })
}

/// Writes every file to a temporary name first and renames once all writes
/// succeeded, so a failure never leaves a partial result set behind.
fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), CliError> {
    let io = |what: &str, p: &Path, e: std::io::Error| CliError::new(ErrorKind::Input, format!("cannot {what} {}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io("create output directory", dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.partial"));
        if let Err(e) = std::fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = std::fs::remove_file(t);
            }
            let _ = std::fs::remove_file(&tmp);
            return Err(io("write", &tmp, e));
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, fin) in &staged {
        std::fs::rename(tmp, fin).map_err(|e| io("rename into", fin, e))?;
    }
    Ok(())
}
