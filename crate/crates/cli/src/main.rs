use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use sohk_core::harness::{parse_config, run_scenario, Scenario};

/// Batch driver: runs one scenario from a JSON config and writes CSV/JSON
/// outputs. Exits with status 0 only when every gate of the run passes.
#[derive(Debug, Parser)]
#[command(name = "sohk", version)]
struct Cli {
    /// coeffs, gci, kinetic, spherefp, soh or compare
    #[arg(value_parser = parse_scenario)]
    scenario: Scenario,

    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads. SOHK_THREADS takes precedence when set.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    Scenario::parse(s).map_err(|e| e.to_string())
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("SOHK_THREADS") {
        Ok(v) => {
            let n = v.trim().parse::<usize>().with_context(|| format!("SOHK_THREADS={v:?} is not a count"))?;
            Ok(Some(n))
        }
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = parse_config(&cli.config).with_context(|| format!("reading {}", cli.config.display()))?;
    if cfg.scenario != cli.scenario {
        anyhow::bail!(
            "config {} describes scenario `{}`, not `{}`",
            cli.config.display(),
            cfg.scenario.name(),
            cli.scenario.name()
        );
    }
    if let Some(out) = cli.out {
        cfg.output = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let summary = run_scenario(&cfg)?;
    for g in &summary.gates {
        println!(
            "{} {}: {:e} (threshold {:e})",
            if g.pass { "PASS" } else { "FAIL" },
            g.name,
            g.value,
            g.threshold
        );
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(summary.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
