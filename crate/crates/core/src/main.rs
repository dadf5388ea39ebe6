use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pacman_core::cli::{self, CliError, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "pacman",
    version,
    about = "Mobility-powered MAC attack analysis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON scenario file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the root seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the attacker MDP and report values, policy and sojourn shares.
    Solve(Common),
    /// Validate the hop kernel against simulated channel sweeps.
    Hopsim(Common),
    /// Run the slotted CSMA/CA simulation with and without the attacker.
    Macsim(Common),
    /// Re-solve while varying one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter name, e.g. c, delta, m, G, weight:7, malicious_cw.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    let (common, name) = match &command {
        Command::Solve(c) => (c, "solve"),
        Command::Hopsim(c) => (c, "hopsim"),
        Command::Macsim(c) => (c, "macsim"),
        Command::Sweep { common, .. } => (common, "sweep"),
    };
    let config = match &common.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    let opts = RunOptions {
        out: common.out.clone(),
        seed: common.seed,
    };
    let manifest = match &command {
        Command::Solve(_) => cli::cmd_solve(config, &opts)?,
        Command::Hopsim(_) => cli::cmd_hopsim(config, &opts)?,
        Command::Macsim(_) => cli::cmd_macsim(config, &opts)?,
        Command::Sweep { axis, values, .. } => {
            let values = cli::parse_values(values)?;
            cli::cmd_sweep(config, axis, &values, &opts)?
        }
    };
    if !common.quiet {
        eprintln!(
            "{name}: wrote {} files (config {})",
            manifest.files.len() + 1,
            &manifest.config_digest[..12]
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pacman: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
