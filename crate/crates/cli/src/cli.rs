//! Argument grammar. Global flags override config-file keys; each
//! subcommand adds at most one flag of its own.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "hydrorecon",
    version,
    about = "Reconstruct past hydroclimate indices from proxy networks",
    propagate_version = true
)]
pub struct Cli {
    /// JSON config file with flat keys; flags given here override it
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// RNG seed (required here or in the config file)
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory for run artifacts
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Range-filter threshold on the F measure
    #[arg(long, global = true)]
    pub threshold: Option<f64>,

    /// Number of MCMC chains
    #[arg(long, global = true)]
    pub chains: Option<usize>,

    /// Total sweeps per chain
    #[arg(long, global = true)]
    pub iters: Option<usize>,

    /// Burn-in sweeps discarded from each chain
    #[arg(long, global = true)]
    pub burn: Option<usize>,

    /// Keep every thin-th post-burn-in sweep
    #[arg(long, global = true)]
    pub thin: Option<usize>,

    /// Put a linear time trend in the index mean
    #[arg(long, global = true)]
    pub trend: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Screen the proxy network and write the decision table
    Filter,
    /// Run the sampler and archive draws plus convergence diagnostics
    Fit,
    /// Fit, then summarize the reconstruction and exceedance probabilities
    Reconstruct,
    /// Hold out the oldest instrumental block and score the refit
    Validate {
        /// Number of oldest instrumental years to hold out
        #[arg(long)]
        holdout: Option<usize>,
    },
    /// Draw a synthetic dataset from the generative model
    Simulate {
        /// JSON file with the true parameters and layout
        #[arg(long, value_name = "PATH")]
        params: Option<PathBuf>,
    },
}
