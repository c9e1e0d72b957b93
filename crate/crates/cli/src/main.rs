//! `ssopt`: classify, solve, verify and simulate band ordering policies.
//!
//! Exit codes: 0 success; 1 error; 2 model or cost condition failure
//! (classify); 3 no minimiser (solve); 4 a verification check failed;
//! 5 a verification check is uncertain and none failed.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{exit, Context, PolicyArgs};
use config::{Axis, Format, RunConfig};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "ssopt", version, about = "Optimal (s,S) ordering policies for diffusion inventory models")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Use the bundled configuration of a builtin problem instead of --config.
    #[arg(long, global = true, value_name = "NAME", conflicts_with = "config")]
    builtin: Option<String>,

    /// Directory for JSON and CSV outputs.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Simulation seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true, env = "SSOPT_THREADS")]
    threads: Option<usize>,

    /// Format of what is printed to stdout.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the boundaries and check the model and cost conditions.
    Classify,
    /// Find the optimal band policy.
    Solve,
    /// Certify a solution (solving first unless --solution is given).
    Verify {
        /// Solution JSON written by `solve`.
        #[arg(long, value_name = "PATH")]
        solution: Option<PathBuf>,
    },
    /// Simulate a band policy and compare with the analytic quantities.
    Simulate {
        #[arg(long, value_name = "PATH")]
        solution: Option<PathBuf>,
        /// Order level (with --z; overrides [policy] and the solution).
        #[arg(long, allow_hyphen_values = true)]
        y: Option<f64>,
        /// Order-up-to level.
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        /// Weight of the Ŝ control in the transversality trace.
        #[arg(long, allow_hyphen_values = true)]
        k: Option<f64>,
    },
    /// Solve over a grid of one or two parameters and emit CSV.
    Sweep {
        /// `name=v1,v2,...`; repeat for a second axis. Overrides [sweep].
        #[arg(long = "axis", value_name = "SPEC")]
        axes: Vec<String>,
    },
}

fn run(cli: Cli) -> CliResult<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = match (&cli.config, &cli.builtin) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(b)) => RunConfig::bundled(b)?,
        (None, None) => return Err(CliError::Config("give --config PATH or --builtin NAME".into())),
    };
    if let Some(s) = cli.seed {
        cfg.simulation.seed = s;
    }
    let ctx = Context {
        out_dir: cli.out.or_else(|| cfg.output.dir.clone()),
        format: cli.format.or(cfg.output.format).unwrap_or_default(),
        cfg,
    };
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Classify => commands::classify(&ctx, &mut stdout),
        Command::Solve => commands::solve(&ctx, &mut stdout),
        Command::Verify { solution } => commands::verify(&ctx, solution.as_deref(), &mut stdout),
        Command::Simulate { solution, y, z, k } => {
            commands::simulate(&ctx, solution.as_deref(), PolicyArgs { y, z, k }, &mut stdout)
        }
        Command::Sweep { axes } => {
            let axes = axes.iter().map(|a| a.parse()).collect::<CliResult<Vec<Axis>>>()?;
            commands::sweep(&ctx, &axes, &mut stdout)
        }
    }
}

fn main() {
    let code = match run(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            exit::ERROR
        }
    };
    std::process::exit(code);
}
