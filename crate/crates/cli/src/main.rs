//! `ladderwalk`: seeded, reproducible experiments for biased walks on the percolation ladder.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::json;

use config::Config;
use output::OutDir;
use run::Experiment;

#[derive(Debug, Parser)]
#[command(name = "ladderwalk", version, about = "Biased random walk on the supercritical percolation ladder")]
struct Cli {
    #[arg(value_enum)]
    experiment: Experiment,
    /// Flat `key = value` file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

/// Runs the experiment; `Ok(false)` means it finished but met invariant violations.
fn execute(cli: &Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => Config::parse(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set("seed", s);
    }
    if let Some(w) = cli.workers {
        cfg.set("workers", w);
    }
    if let Some(o) = &cli.out {
        cfg.set("out", o.display());
    }
    let seed: u64 = cfg.get("seed", 1)?;
    let workers: usize = cfg.get("workers", 0)?;
    let out_path = PathBuf::from(cfg.get("out", format!("out/{}", cli.experiment.name()))?);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let mut out = OutDir::create(&out_path)?;
    let start = Instant::now();
    let result = pool.install(|| cli.experiment.run(&cfg, seed, &mut out));
    let wall = start.elapsed().as_secs_f64();

    let (status, violations) = match &result {
        Ok(o) => (if o.violations.is_empty() { "ok" } else { "invariant_violation" }, o.violations.clone()),
        Err(e) => ("error", vec![format!("{e:#}")]),
    };
    if let Ok(o) = &result {
        out.json("summary.json", &o.summary)?;
    }
    let manifest = json!({
        "experiment": cli.experiment.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": cfg.entries(),
        "resolved_config": cfg.resolved(),
        "status": status,
        "violations": violations,
        "outputs": out.written(),
        "wall_time_seconds": wall,
    });
    std::fs::write(out.root().join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let o = result?;
    for v in &violations {
        eprintln!("violation: {v}");
    }
    eprintln!("{}: wrote {} file(s) to {} in {wall:.1}s", cli.experiment.name(), out.written().len() + 1, out.root().display());
    Ok(o.violations.is_empty())
}
