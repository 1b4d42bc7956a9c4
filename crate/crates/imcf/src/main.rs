use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use imcf::cli;

#[derive(Parser)]
#[command(name = "imcf", version, about = "Inverse mean curvature flow simulator for graphs over a spherical cap with free boundary on a cone")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's out_dir, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configs, each into its own subdirectory.
    Sweep {
        #[arg(long, num_args = 1.., required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Mesh refinement study against the radial solution.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the warp's admissibility hypotheses and print the report.
    ValidateWarp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMCF_LOG", "warn")).init();
    let args = Args::parse();
    let result = match &args.cmd {
        Cmd::Run { config, out } => cli::cmd_run(config, out.as_deref()),
        Cmd::Sweep { config, out, jobs } => cli::cmd_sweep(config, out.as_deref(), *jobs),
        Cmd::Convergence { config, levels, out } => {
            cli::cmd_convergence(config, *levels, out.as_deref())
        }
        Cmd::ValidateWarp { config, out } => cli::cmd_validate_warp(config, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::EXIT_CONFIG as u8)
        }
    }
}
