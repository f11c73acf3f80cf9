use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{Failure, Outcome};
use config::{env_overrides, Settings};

#[derive(Parser)]
#[command(name = "twophase", version, about = "Two-phase transmission solvers and verification tools")]
struct Cli {
    /// key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// grid size as NxM
    #[arg(long, global = true)]
    grid: Option<String>,
    /// resolvent parameter as RE,IM
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// densities as PLUS,MINUS
    #[arg(long, global = true)]
    rho: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// extra settings as key=value, repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flat interface, Laplace case
    SolveFlat {
        /// input vector-field dump
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Flat interface, resolvent case
    SolveResolvent {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Bent interface by fixed-point iteration
    SolveBent,
    /// Closed interface on a disk with cutoff gluing
    SolveCompact,
    /// Two-phase Helmholtz decomposition of a dump
    Helmholtz {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Finite-difference convergence tables
    Oracle {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Symbol bound constants on a frequency sweep
    VerifySymbols,
    /// Contour residues against closed forms
    VerifyResidues,
    /// Mean and support checks for the cutoff remainders
    Invariants,
}

fn run(cli: Cli) -> Outcome {
    let mut flags = BTreeMap::new();
    for (k, v) in
        [("grid", cli.grid), ("lambda", cli.lambda), ("rho", cli.rho), ("seed", cli.seed.map(|s| s.to_string()))]
    {
        if let Some(v) = v {
            flags.insert(k.to_string(), v);
        }
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure { code: 1, err: anyhow::anyhow!("--set {kv:?} is not KEY=VALUE") })?;
        flags.insert(k.trim().to_string(), v.trim().to_string());
    }
    let input = match &cli.command {
        Command::SolveFlat { input }
        | Command::SolveResolvent { input }
        | Command::Helmholtz { input }
        | Command::Oracle { input } => input.clone(),
        _ => None,
    };
    if let Some(p) = input {
        flags.insert("input".into(), p.display().to_string());
    }
    let settings = Settings::load(cli.config.as_deref(), env_overrides(std::env::vars()), flags, cli.out)
        .map_err(|err| Failure { code: 1, err })?;
    match cli.command {
        Command::SolveFlat { .. } => commands::solve_flat(&settings),
        Command::SolveResolvent { .. } => commands::solve_resolvent(&settings),
        Command::SolveBent => commands::solve_bent(&settings),
        Command::SolveCompact => commands::solve_compact(&settings),
        Command::Helmholtz { .. } => commands::helmholtz(&settings),
        Command::Oracle { .. } => commands::oracle(&settings),
        Command::VerifySymbols => commands::verify_symbols(&settings),
        Command::VerifyResidues => commands::verify_residues(&settings),
        Command::Invariants => commands::invariants(&settings),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => print!("{}", report.render()),
        Err(Failure { code, err }) => {
            eprintln!("twophase: {err:#}");
            std::process::exit(code);
        }
    }
}
