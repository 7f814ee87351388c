//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, Outcome};
use crate::config::{self, BranchesConfig, ExperimentConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "onsager", version, about = "Onsager free-energy solver and zero-temperature analysis")]
pub struct Args {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Use a built-in experiment config (1, 2 or 3) instead of --config.
    #[arg(long, global = true, value_name = "N")]
    pub example: Option<u8>,
    /// Output directory. Defaults to the config's output_dir, then `onsager-out`.
    #[arg(long, global = true, value_name = "DIR", env = "ONSAGER_OUT")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides the resolution of every axis.
    #[arg(long, global = true, value_name = "N")]
    pub resolution: Option<usize>,
    /// Do not print the summary.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Continuation in b followed by every analysis in the config.
    Run,
    /// Solve at a single b from the configured initial density.
    Solve {
        /// Defaults to the last entry of solver.b_schedule.
        #[arg(long)]
        b: Option<f64>,
    },
    /// Continuation along solver.b_schedule.
    Sweep,
    /// Roots of the self-consistency equation (examples 1 and 2).
    Branches {
        /// Values of b, overriding the config (repeat or separate by commas).
        #[arg(long = "b", value_delimiter = ',')]
        b: Vec<f64>,
        /// Largest rod length for example 2.
        #[arg(long)]
        max_length: Option<f64>,
        #[arg(long)]
        scan_resolution: Option<usize>,
    },
    /// Selection test for the configured maps.
    Select,
    /// Pairs of grid points on which the kernel is at most tau.
    Zeroset {
        /// Defaults to 1e-3 times the kernel sup norm.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Symmetry, diagonal, sign and Lipschitz report for the kernel.
    ValidateKernel,
}

fn load_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, args.example) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --config or --example, not both".into())),
        (Some(path), None) => config::load(path)?,
        (None, Some(n)) => config::builtin(n)?,
        (None, None) => return Err(CliError::Usage("a config is required: use --config PATH or --example N".into())),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.resolution {
        if n < 2 {
            return Err(CliError::Usage("--resolution must be at least 2".into()));
        }
        cfg.set_resolution(n);
    }
    Ok(cfg)
}

fn branch_settings(args: &Args, b: &[f64], max_length: Option<f64>, scan: Option<usize>) -> Result<BranchesConfig, CliError> {
    let mut bc = if args.config.is_some() {
        load_config(args)?
            .analysis
            .branches
            .ok_or_else(|| CliError::Schema { path: "analysis.branches".into(), message: "not configured".into() })?
    } else {
        let n = args.example.ok_or_else(|| CliError::Usage("branches needs --example 1|2 or --config".into()))?;
        commands::builtin_branches(n)?
    };
    if !b.is_empty() {
        onsager_core::solver::validate_schedule(b).map_err(|e| CliError::Usage(format!("--b: {e}")))?;
        bc.b = b.to_vec();
    }
    if let Some(l) = max_length {
        bc.max_length = l;
    }
    if let Some(s) = scan {
        bc.scan_resolution = s;
    }
    Ok(bc)
}

pub fn dispatch(args: &Args) -> Result<Outcome, CliError> {
    let out_for = |cfg: Option<&ExperimentConfig>| args.out.clone().unwrap_or_else(|| commands::default_out_dir(cfg));
    match &args.command {
        Command::Branches { b, max_length, scan_resolution } => {
            let bc = branch_settings(args, b, *max_length, *scan_resolution)?;
            commands::branches(&bc, &out_for(None))
        }
        cmd => {
            let cfg = load_config(args)?;
            let out = out_for(Some(&cfg));
            match cmd {
                Command::Run => commands::run(&cfg, &out),
                Command::Solve { b } => commands::solve(&cfg, &out, *b),
                Command::Sweep => commands::sweep(&cfg, &out),
                Command::Select => commands::select(&cfg, &out),
                Command::Zeroset { tau } => commands::zeroset(&cfg, &out, *tau),
                Command::ValidateKernel => commands::validate_kernel(&cfg, &out),
                Command::Branches { .. } => unreachable!(),
            }
        }
    }
}

/// Runs the command and returns the process exit code.
pub fn execute(args: Args) -> i32 {
    match dispatch(&args) {
        Ok(o) => {
            if !args.quiet {
                print!("{}", o.summary);
            }
            o.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
