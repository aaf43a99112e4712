//! `distsat`: run experiment presets and validate scenario files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use distsat::experiment::{run_preset, write_csv, ExperimentResult, Preset, RunOptions, SCHEMA_LINE};
use distsat::scenario::{load_scenario_file, ScenarioConfig};

/// Worker-count override for the thread pool.
const WORKERS_ENV: &str = "DISTSAT_WORKERS";

#[derive(Parser)]
#[command(name = "distsat", version, about = "Multi-satellite MIMO precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment preset and write CSV rows.
    Run {
        #[arg(long, value_parser = parse_preset)]
        preset: Preset,
        /// Scenario TOML; defaults apply to every key left out.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Base seed, overriding `rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination (stdout if absent). A JSON sidecar is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Monte-Carlo trials per evaluation, overriding `mc_trials`.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        quiet: bool,
        /// Record wall-clock times (rows are then no longer byte-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Check a scenario file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: distsat::Error| e.to_string())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    schema: &'a str,
    preset: Preset,
    trials: usize,
    rows: usize,
    warnings: &'a [String],
    config: &'a ScenarioConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::Run { preset, config, seed, out, trials, quiet, timing } => {
            run(preset, config.as_deref(), seed, out.as_deref(), trials, quiet, timing)
        }
        Command::Validate { config } => validate(&config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_workers() -> Result<()> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let workers: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()?;
    Ok(())
}

fn load(config: Option<&Path>) -> Result<ScenarioConfig> {
    match config {
        Some(path) => load_scenario_file(path).with_context(|| format!("loading {}", path.display())),
        None => Ok(ScenarioConfig::default()),
    }
}

fn run(
    preset: Preset,
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
    trials: Option<usize>,
    quiet: bool,
    timing: bool,
) -> Result<()> {
    let mut scenario = load(config)?;
    if let Some(seed) = seed {
        scenario.rng_seed = seed;
    }
    if let Some(t) = trials {
        anyhow::ensure!(t >= 1, "--trials must be at least 1");
        scenario.mc_trials = t;
    }
    scenario.validate()?;
    let options = RunOptions { trials, timing };
    let result = run_preset(preset, &scenario, &options)?;
    if !quiet {
        for w in &result.warnings {
            eprintln!("warning: {w}");
        }
    }
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&result, BufWriter::new(file))?;
            write_sidecar(&result, &scenario, &path.with_extension("json"))?;
            if !quiet {
                eprintln!("wrote {} rows to {}", result.rows.len(), path.display());
            }
        }
        None => write_csv(&result, io::stdout().lock())?,
    }
    Ok(())
}

fn write_sidecar(result: &ExperimentResult, scenario: &ScenarioConfig, path: &Path) -> Result<()> {
    let sidecar = Sidecar {
        schema: SCHEMA_LINE.trim_start_matches("# "),
        preset: result.preset,
        trials: scenario.mc_trials,
        rows: result.rows.len(),
        warnings: &result.warnings,
        config: scenario,
    };
    let mut file = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut file, &sidecar)?;
    writeln!(file)?;
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let scenario = load(Some(path))?;
    println!("OK");
    println!("{}", serde_json::to_string_pretty(&scenario)?);
    Ok(())
}
