use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod config;
mod run;

use config::ExperimentArgs;

#[derive(Debug, Parser)]
#[command(name = "arglt", version, about = "Robust joint graph and weight sparsification of GCNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Poison a graph and write attack.json plus attack_stats.csv
    Attack(ExperimentArgs),
    /// Attack (or load an attack), then run iterative sparsification
    Sparsify(ExperimentArgs),
    /// Run the loss-component ablation grid at the checkpoint rounds
    Ablate(ExperimentArgs),
    /// Aggregate finished runs into summary.json and plot-ready CSVs
    Report {
        /// Run directories (each holding report.json or seed_* subdirectories)
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a stochastic block model dataset directory
    GenSbm {
        #[arg(long, value_name = "k,n,p_in,p_out,F,sigma")]
        sbm: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train/val/test fractions written to split.json
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.1, 0.8])]
        split: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("ARGLT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|e| anyhow::anyhow!("ARGLT_THREADS={v:?}: {e}"))?;
    #[cfg(feature = "parallel")]
    {
        if n <= 1 {
            arglt::par::set_default_exec(arglt::par::Exec::Sequential);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Attack(a) => run::attack(&a.resolve()?, &a.out),
        Command::Sparsify(a) => run::sparsify(&a.resolve()?, &a.out),
        Command::Ablate(a) => run::ablate(&a.resolve()?, &a.out),
        Command::Report { runs, out } => run::report(&runs, &out),
        Command::GenSbm { sbm, seed, split, out } => run::gen_sbm(&sbm, seed, &split, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
