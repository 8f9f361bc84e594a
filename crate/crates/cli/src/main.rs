//! Command-line entry point.
//!
//! Exit status: 0 on success, 2 for configuration problems (bad flags, bad
//! TOML, semantic mismatches), 3 for runtime/numerical failures, 4 for I/O
//! failures including corrupt checkpoint or resume files.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use zsaq_cli::config::{RunConfig, Workflow};
use zsaq_cli::error::Result;
use zsaq_cli::{cmd_ablation, cmd_landscape, cmd_theory, cmd_zsaq};

#[derive(Parser)]
#[command(
    name = "zsaq",
    version,
    about = "Zero-shot sharpness-aware quantization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distill a quantized student from a synthetic-data teacher
    Zsaq(CommonArgs),
    /// Compare the full optimizer against its three ablated variants
    Ablation(CommonArgs),
    /// Convergence study on the strongly concave sine toy
    TheorySc(CommonArgs),
    /// Convergence study on the singular (PL-only) toy
    TheoryPl(CommonArgs),
    /// Held-out loss along the line between two checkpoints
    Landscape(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file; built-in defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config's `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep entries
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep finished sweep entries whose recorded config hash matches
    #[arg(long)]
    resume: bool,
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let (workflow, args) = match &cli.command {
        Command::Zsaq(a) => (Workflow::Zsaq, a),
        Command::Ablation(a) => (Workflow::Ablation, a),
        Command::TheorySc(a) => (Workflow::TheorySc, a),
        Command::TheoryPl(a) => (Workflow::TheoryPl, a),
        Command::Landscape(a) => (Workflow::Landscape, a),
    };
    let mut cfg = RunConfig::load(args.config.as_deref(), workflow)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    match workflow {
        Workflow::Zsaq => cmd_zsaq(&cfg, args.out.as_deref(), args.jobs, args.resume),
        Workflow::Ablation => cmd_ablation(&cfg, args.out.as_deref(), args.jobs, args.resume),
        Workflow::TheorySc | Workflow::TheoryPl => {
            cmd_theory(&cfg, args.out.as_deref(), args.jobs, args.resume)
        }
        Workflow::Landscape => cmd_landscape(&cfg, args.out.as_deref()),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
