use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cefl_harness::presets::{parse_attack, run_preset, AlphaChoice, PresetName, PresetOptions};
use cefl_harness::sweep::{run_sweep, Axis, SweepSpec};
use cefl_harness::{execute, load_config, output, summarize, HarnessError, Metric, Result};
use clap::{Parser, Subcommand};

/// Byzantine-robust federated local SGD simulator.
///
/// Environment: CEFL_WORKERS caps worker threads, CEFL_LOG sets log level.
#[derive(Parser)]
#[command(name = "cefl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate a figure preset.
    Preset {
        #[arg(value_parser = clap::value_parser!(PresetName))]
        name: PresetName,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Step size: a number, `theory` or `theory:<fraction>`.
        #[arg(long)]
        alpha: Option<AlphaChoice>,
        /// Attack as `name:param`, e.g. `sign_flip:10`.
        #[arg(long, value_parser = parse_attack)]
        attack: Option<cefl_core::AttackStrategy<f64>>,
    },
    /// Sweep one axis of a base config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `byzantine_f|local_T|rule|seed=v1,v2,...`
        #[arg(long, value_parser = Axis::parse)]
        axis: Axis,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the theory advisory for a config without running it.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summary statistics of a trace CSV.
    Summarize {
        #[arg(long)]
        trace: PathBuf,
        /// `optimality_gap` or `mean_sq_grad`.
        #[arg(long, default_value = "optimality_gap", value_parser = parse_metric)]
        metric: Metric,
    },
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    Metric::from_name(s).ok_or_else(|| format!("unknown metric {s:?}"))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out } => {
            let loaded = load_config(&config)?;
            let run = execute(&loaded, &out)?;
            if let Some(s) = &run.summary {
                print_json(s);
            }
            match run.abort {
                Some(reason) => Err(HarnessError::Abort(reason)),
                None => Ok(()),
            }
        }
        Command::Preset { name, out, seed, alpha, attack } => {
            let defaults = PresetOptions::default();
            let opts = PresetOptions {
                seed,
                alpha: alpha.unwrap_or(defaults.alpha),
                attack: attack.unwrap_or(defaults.attack),
            };
            let report = run_preset(name, &out, &opts)?;
            for c in &report.cells {
                let plateau = c.summary.as_ref().map(|s| s.plateau);
                println!("{:<20} plateau={plateau:?} reach={:?}", c.name, c.rounds_to_reach);
            }
            Ok(())
        }
        Command::Sweep { config, axis, reps, out } => {
            let loaded = load_config(&config)?;
            let spec = SweepSpec { base: loaded.file, axis, replications: reps };
            let cells = run_sweep(&spec, &out, config.parent().unwrap_or(Path::new(".")))?;
            for c in &cells {
                println!("{:<28} plateau={:?}", c.dir, c.summary.as_ref().map(|s| s.plateau));
            }
            Ok(())
        }
        Command::Check { config } => {
            let loaded = load_config(&config)?;
            print_json(&loaded.advisory);
            Ok(())
        }
        Command::Summarize { trace, metric } => {
            print_json(&summarize(&output::read_csv(&trace)?, metric)?);
            Ok(())
        }
    }
}

fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var("CEFL_WORKERS") {
        let n: usize = v
            .parse()
            .map_err(|_| HarnessError::Validation(format!("CEFL_WORKERS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Validation(format!("CEFL_WORKERS: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CEFL_LOG", "warn")).init();
    let cli = Cli::parse();
    match init_workers().and_then(|()| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
