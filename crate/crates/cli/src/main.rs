use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isleforge_cli::acceptance::{self, Fault};
use isleforge_cli::commands::{self, CommandError, Outcome};
use isleforge_cli::config::{ConfigError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "isleforge", version, about = "Island models on critical Galton-Watson genealogies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to absent fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [env: ISLEFORGE_WORKERS]
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicate forests and write per-replicate integrals
    Simulate(Common),
    /// Draw from the limit point measure
    LimitSample(Common),
    /// Solve the cumulant equation and compare with both samplers
    Cumulant(Common),
    /// Run the acceptance suite
    Verify {
        #[command(flatten)]
        common: Common,
        /// Only A1-A5
        #[arg(long)]
        quick: bool,
        /// Comma-separated criteria to run, e.g. A8,A13
        #[arg(long, value_delimiter = ',', conflicts_with = "quick")]
        only: Vec<String>,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<Fault>,
    },
}

fn load(common: &Common) -> Result<RunConfig, ConfigError> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.resolve(&Overrides {
        seed: common.seed,
        workers: common.workers,
        out: common.out.clone(),
    })
}

fn run(cli: Cli) -> Result<Outcome, CommandError> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&load(&c)?),
        Command::LimitSample(c) => commands::limit_sample(&load(&c)?),
        Command::Cumulant(c) => commands::cumulant(&load(&c)?),
        Command::Verify {
            common,
            quick,
            only,
            inject_fault,
        } => {
            let cfg = load(&common)?;
            for id in &only {
                if !acceptance::is_known(id) {
                    return Err(ConfigError::Invalid {
                        field: "--only".into(),
                        message: format!("unknown criterion `{id}`"),
                    }
                    .into());
                }
            }
            let ids: Vec<&str> = if !only.is_empty() {
                only.iter().map(String::as_str).collect()
            } else if quick {
                acceptance::QUICK.to_vec()
            } else {
                acceptance::ALL.to_vec()
            };
            commands::verify(&cfg, &ids, quick, inject_fault)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
