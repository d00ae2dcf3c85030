use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use aniso_hybrid::{build_system, split_at_interface, ModelKind};
use aniso_hybrid_cli::{config::DomainPreset, run_to_dir, ExperimentConfig, RunInfo, SetupConfig, THREADS_ENV};

#[derive(Parser)]
#[command(name = "aniso-hybrid", version, about = "Anisotropic elliptic solvers: experiments and matrix export")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
        /// Recorded in config-echo.json; the studies draw no random numbers.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Assemble one system matrix and write it in MatrixMarket format.
    DumpMatrix {
        #[arg(long, value_parser = parse_model)]
        model: ModelKind,
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        nz: usize,
        /// Interface row; required for the hybrid model.
        #[arg(long)]
        iota: Option<usize>,
        #[arg(long, default_value = "a")]
        setup: String,
        #[arg(long, default_value = "b")]
        domain: String,
        #[arg(long, default_value_t = 1e-8)]
        eps_min: f64,
        #[arg(long, default_value_t = 1.0)]
        eps_max: f64,
        #[arg(long, default_value_t = 30.0)]
        r: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    match ModelKind::parse(s) {
        Some(ModelKind::L1D) | None => Err(format!("unknown model {s:?}, expected p, ap or apl")),
        Some(k) => Ok(k),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out, threads, seed } => {
            if let Some(n) = threads {
                aniso_hybrid::par::configure_threads(n);
            }
            let cfg = ExperimentConfig::from_path(&config)?;
            let out = match out.or_else(|| cfg.output_dir.clone()) {
                Some(o) => o,
                None => bail!("no output directory: pass --out or set output_dir"),
            };
            let outcome = run_to_dir(&cfg, &out, &RunInfo::current(seed))?;
            println!("{} rows written to {}", outcome.rows, out.display());
            if outcome.required_failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &outcome.required_failures {
                    eprintln!("required solve failed: {f}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::DumpMatrix { model, nx, nz, iota, setup, domain, eps_min, eps_max, r, out } => {
            let domain: DomainPreset =
                serde_json::from_value(serde_json::Value::String(domain.clone())).with_context(|| format!("unknown domain {domain:?}"))?;
            let setup = SetupConfig { name: setup, domain, eps_min, eps_max, r, ..Default::default() };
            let problem = setup.problem(eps_min)?;
            let mesh = aniso_hybrid::build_mesh(problem.domain, nx, nz)?;
            let split = match (model, iota) {
                (ModelKind::APL, None) => bail!("--iota is required for the apl model"),
                (_, Some(i)) => Some(split_at_interface(&mesh, i)?),
                (_, None) => None,
            };
            let sys = build_system(model, &mesh, split.as_ref(), &problem, 3)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            aniso_hybrid::write_matrix_market(&sys.system.matrix, &mut w)
                .and_then(|_| w.flush())
                .with_context(|| format!("writing {}", out.display()))?;
            let s = sys.stats();
            println!("{model}: {} rows, {} nonzeros -> {}", s.rows, s.nnz, out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
