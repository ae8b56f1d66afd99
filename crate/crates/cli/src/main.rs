//! `relaylab` command line.
//!
//! Exit codes: 0 success, 1 scenario validation error, 2 runtime or I/O error.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relaylab::scenario::{emit_outputs, load_scenario, preflight_out_dir, preflight_out_file, run, ScenarioConfig, ScenarioError};

#[derive(Parser)]
#[command(name = "relaylab", version, about = "Multi-UAV relay chain and lidar mapping simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.jsonl, metrics.csv and cloud.xyz
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario tick count
        #[arg(long)]
        ticks: Option<u64>,
    },
    /// Run a mapping scenario and write only the point cloud
    Map {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a scenario without running it
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn load(path: &Path, seed: Option<u64>, ticks: Option<u64>) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = load_scenario(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(ticks) = ticks {
        if ticks == 0 {
            return Err(ScenarioError::Config(relaylab::scenario::ConfigError::Invalid {
                path: "ticks".into(),
                message: "must be positive".into(),
            }));
        }
        cfg.ticks = ticks;
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<(), ScenarioError> {
    match command {
        Command::Validate { scenario } => {
            let cfg = load(&scenario, None, None)?;
            println!(
                "{}: ok ({} relays, {} ticks, traffic {}, mapping {})",
                cfg.name,
                cfg.chain.relay_count(),
                cfg.ticks,
                if cfg.traffic.is_some() { "on" } else { "off" },
                if cfg.mapping.is_some() { "on" } else { "off" },
            );
        }
        Command::Run { scenario, out, seed, ticks } => {
            let cfg = load(&scenario, seed, ticks)?;
            preflight_out_dir(&out).map_err(|e| ScenarioError::io(format!("output directory {}", out.display()), e))?;
            let output = run(&cfg)?;
            let written = emit_outputs(&output, &out).map_err(|e| ScenarioError::io(format!("writing {}", out.display()), e))?;
            for path in written {
                println!("{}", path.display());
            }
        }
        Command::Map { scenario, out } => {
            let cfg = load(&scenario, None, None)?;
            if cfg.mapping.is_none() {
                return Err(ScenarioError::Config(relaylab::scenario::ConfigError::Invalid {
                    path: "environment".into(),
                    message: "mapping run needs an `environment` table".into(),
                }));
            }
            preflight_out_file(&out).map_err(|e| ScenarioError::io(format!("output file {}", out.display()), e))?;
            let cloud = run(&cfg)?.cloud.unwrap_or_default();
            let file = File::create(&out).map_err(|e| ScenarioError::io(format!("writing {}", out.display()), e))?;
            cloud.write_xyz(BufWriter::new(file)).map_err(|e| ScenarioError::io(format!("writing {}", out.display()), e))?;
            println!("{} points -> {}", cloud.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
