use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use walker_core::commands;
use walker_core::config::{ExperimentConfig, RawConfig};
use walker_core::{io, Error, Result};

/// Monitored quantum walk simulations, exponent analysis and RG flow.
#[derive(Parser)]
#[command(name = "walker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run one ensemble and write its observable series.
    Simulate,
    /// Run ensembles over the model x gamma x size grid.
    Sweep,
    /// Extract exponents and IPR classes from sweep output.
    Analyze,
    /// Fit (gamma_c, xi) by finite-size-scaling collapse of alpha curves.
    Collapse,
    /// Integrate one-loop RG flow families and classify their phases.
    Rgflow,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "WALKER_WORKERS")]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set sim.gamma=2`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    dim: Option<String>,
    /// Lattice size(s), comma separated.
    #[arg(long, short = 'N', global = true)]
    size: Option<String>,
    #[arg(long, global = true)]
    tau: Option<String>,
    #[arg(long, global = true)]
    gamma: Option<String>,
    #[arg(long, global = true)]
    dt: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    /// Trajectory count.
    #[arg(long, short = 'M', global = true)]
    trajectories: Option<String>,
    #[arg(long, global = true)]
    t_max: Option<String>,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut raw = match &common.config {
        Some(path) => RawConfig::parse(&io::read_to_string(path)?)?,
        None => RawConfig::default(),
    };
    let flags = [
        ("lattice.d", &common.dim),
        ("lattice.N", &common.size),
        ("sim.tau", &common.tau),
        ("sim.gamma", &common.gamma),
        ("sim.dt", &common.dt),
        ("sim.model", &common.model),
        ("ensemble.M", &common.trajectories),
        ("ensemble.t_max", &common.t_max),
    ];
    for o in &common.overrides {
        raw.set(o)?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            raw.set_value(key, v)?;
        }
    }
    if let Some(seed) = common.seed {
        raw.set_value("ensemble.seed", &seed.to_string())?;
    }
    if let Some(w) = common.workers {
        raw.set_value("run.workers", &w.to_string())?;
    }
    if let Some(out) = &common.out {
        let s = out
            .to_str()
            .ok_or_else(|| Error::contract("output path must be valid UTF-8"))?;
        raw.set_value("output.dir", s)?;
    }
    ExperimentConfig::from_raw(raw)
}

fn run(cli: &Cli) -> Result<commands::RunManifest> {
    let config = load(&cli.common)?;
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&config),
        Command::Sweep => commands::cmd_sweep(&config),
        Command::Analyze => commands::cmd_analyze(&config),
        Command::Collapse => commands::cmd_collapse(&config),
        Command::Rgflow => commands::cmd_rgflow(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) => {
            for f in &manifest.files {
                println!("{}  {}", f.sha256, f.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
