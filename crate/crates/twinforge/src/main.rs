use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twinforge::commands::{self, BasisMode, TrainMode};
use twinforge::config;
use twinforge::CliResult;

#[derive(Parser)]
#[command(name = "twinforge", version, about = "Twin-model inference and adjoint gradients for gray-box 1-D conservation laws")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the gray-box simulator and write its solution.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Infer the twin flux from the gray-box solution.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// `mismatch` or `pretrain+finetune`.
        #[arg(long, default_value = "pretrain+finetune")]
        metric: TrainMode,
        /// `adaptive` or `adhoc:<dictionary.json>`.
        #[arg(long, default_value = "adaptive")]
        basis: BasisMode,
    },
    /// Compare twin adjoint gradients with gray-box finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        components: usize,
        /// One or more comma-separated steps; the first also drives the full reference.
        #[arg(long, value_delimiter = ',', default_value = "1e-5")]
        fd_step: Vec<f64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, env = "TWINFORGE_JOBS", default_value_t = 0)]
        jobs: usize,
    },
    /// Consolidate artifacts in an output directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    let v = match cli.cmd {
        Cmd::Simulate { config } => serde_json::to_value(commands::simulate(&config::load(&config)?)?),
        Cmd::Train { config, metric, basis } => {
            let out = commands::train(&config::load(&config)?, metric, &basis)?;
            Ok(serde_json::json!({
                "dict_size": out.dict_size,
                "final_mismatch": out.final_mismatch,
                "pretrain_solves": out.pretrain_solves,
                "total_solves": out.total_solves,
            }))
        }
        Cmd::Gradcheck {
            config,
            components,
            fd_step,
            jobs,
        } => {
            let out = commands::gradcheck(&config::load(&config)?, components, &fd_step, jobs)?;
            Ok(serde_json::json!({
                "max_rel_err": out.report.max_rel_err,
                "integrated_error": out.integrated_error,
                "adjoint_solves": out.adjoint_solves,
            }))
        }
        Cmd::Report { dir } => serde_json::to_value(commands::report(&dir)?.files),
    };
    Ok(v.expect("outputs serialize"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.payload());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
