//! `pfens`: kernels, correlations, enumeration oracles and identity checks
//! for discrete symplectic and orthogonal Pfaffian ensembles.

mod commands;
mod config;
mod output;
mod verify;

use clap::{Args, Parser, Subcommand};
use config::WeightSpec;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "pfens", version, about = "Discrete Pfaffian ensemble kernels and checks")]
pub struct Cli {
    /// key=value configuration file; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output directory (default: $PFENS_OUT, then ./pfens-out)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// seed for every randomized step
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

/// The ensemble a command works on.
#[derive(Args, Debug, Clone, Default)]
pub struct EnsembleArgs {
    /// e.g. charlier:a=1, meixner:beta=2,c=0.3, generic:d1=0/2/1,d2=0.6/1.35/0.3
    #[arg(long)]
    pub weight: Option<WeightSpec>,
    /// number of particles N (2N for the orthogonal flavor)
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// fixed lattice cutoff L; otherwise chosen from --tail-tol
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long = "tail-tol")]
    pub tail_tol: Option<f64>,
    /// sympl, sympl-nabla or orth
    #[arg(long)]
    pub flavor: Option<String>,
    /// inversion, rank or closed
    #[arg(long)]
    pub route: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the four blocks of the matrix kernel and a route comparison.
    Kernel {
        #[command(flatten)]
        ens: EnsembleArgs,
    },
    /// Correlation function at a set of points.
    Correlate {
        #[command(flatten)]
        ens: EnsembleArgs,
        /// comma-separated lattice points, e.g. 3,7
        #[arg(long)]
        points: Option<String>,
    },
    /// Enumerate a small truncated ensemble and compare with the kernel.
    Oracle {
        #[command(flatten)]
        ens: EnsembleArgs,
        /// random test functions for the generating-functional comparison
        #[arg(long)]
        trials: Option<usize>,
        /// number of most likely configurations to export
        #[arg(long)]
        top: Option<usize>,
    },
    /// Run a suite of identity checks; exit status 0 iff all pass.
    Verify {
        /// debruijn, operators, lemma71, commutators, difference, zmeasure or oracle
        #[arg(long)]
        suite: Option<String>,
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Convergence tables for the Charlier and Laguerre limits.
    Limit {
        /// charlier or laguerre
        #[arg(long)]
        target: Option<String>,
        /// comma-separated beta values (charlier) or c values (laguerre)
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long = "N")]
        n: Option<usize>,
        /// Charlier parameter
        #[arg(long)]
        a: Option<f64>,
        /// degree of the tracked function
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        y: Option<f64>,
        /// last lattice point of the Charlier comparison
        #[arg(long = "x-max")]
        x_max: Option<usize>,
    },
    /// z-measure checks on Young diagrams.
    Zmeasure {
        /// prop41 (symplectic map), prop42 (orthogonal map), hooks or norm
        #[arg(long)]
        check: Option<String>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        cutoff: Option<usize>,
        #[arg(long = "max-part")]
        max_part: Option<usize>,
        /// z and z' for the norm check (default 2, 2)
        #[arg(long)]
        z: Option<f64>,
        #[arg(long = "z-prime")]
        z_prime: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pfens: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
