//! Experiment runner for the anisotropic solvers.
//!
//! A run reads one JSON config, executes a study and writes
//! `results.csv`, `config-echo.json`, `summary.json` and SVG plots into the
//! output directory. See the workspace README for the column reference.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub mod config;
pub mod rows;
pub mod run;
pub mod svg;

pub use config::{ExperimentConfig, InterfaceSpec, MeshSpec, SetupConfig, Study};
pub use rows::{ResultRow, Status, COLUMNS};
pub use run::{run_study, StudyOutput};

/// Environment variable that sets the worker count when `--threads` is absent.
pub const THREADS_ENV: &str = "ANISO_HYBRID_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{source_name}:{line}:{column}: {message}")]
    Parse { source_name: String, line: usize, column: usize, message: String },

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error("{}: {1}", .0.display())]
    Io(PathBuf, #[source] std::io::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Solver(#[from] aniso_hybrid::Error),
}

/// Run metadata stored next to the echoed config.
#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub threads: usize,
    /// Recorded only; every study is deterministic.
    pub seed: Option<u64>,
    pub parallel: bool,
    pub version: &'static str,
}

impl RunInfo {
    pub fn current(seed: Option<u64>) -> Self {
        Self {
            threads: aniso_hybrid::par::current_threads(),
            seed,
            parallel: aniso_hybrid::par::is_parallel(),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: usize,
    pub required_failures: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Runs the study and writes every output file into `out_dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, out_dir: &Path, info: &RunInfo) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(out_dir.to_path_buf(), e))?;
    let output = run_study(cfg)?;
    let mut files = Vec::new();

    let csv_path = out_dir.join("results.csv");
    let file = fs::File::create(&csv_path).map_err(|e| CliError::Io(csv_path.clone(), e))?;
    rows::write_csv(&output.rows, BufWriter::new(file))?;
    files.push(csv_path);

    let echo = serde_json::json!({ "config": cfg, "run": info });
    let echo_path = out_dir.join("config-echo.json");
    write_file(&echo_path, serde_json::to_string_pretty(&echo).expect("config serializes").as_bytes())?;
    files.push(echo_path);

    let summary_path = out_dir.join("summary.json");
    write_file(&summary_path, serde_json::to_string_pretty(&output.summary).expect("summary serializes").as_bytes())?;
    files.push(summary_path);

    for (name, plot) in &output.plots {
        let p = out_dir.join(name);
        write_file(&p, plot.render().as_bytes())?;
        files.push(p);
    }

    let required_failures = output
        .rows
        .iter()
        .filter(|r| r.is_required_failure())
        .map(|r| {
            format!(
                "{} {} nx={} nz={} eps_min={:e}: {} ({})",
                r.study,
                r.model,
                r.nx,
                r.nz,
                r.eps_min,
                r.status.as_str(),
                r.message.as_deref().unwrap_or("no detail")
            )
        })
        .collect();
    Ok(RunOutcome { rows: output.rows.len(), required_failures, files })
}
