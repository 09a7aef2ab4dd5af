//! `wsnm` — batch frontend for the weighted Schatten p-norm toolkit:
//! image denoising, robust PCA (low-rank + sparse decomposition), proximal
//! operator inspection, benchmark sweeps, and standalone metrics.
//!
//! Every subcommand takes `--config <json>` (flags override file values,
//! which override defaults) and writes `manifest.json` (the deterministic
//! run record, including the fully resolved config) plus `timings.json`
//! (volatile wall-clock stages) into its output directory.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "wsnm",
    version,
    about = "Weighted Schatten p-norm toolkit: denoising, robust PCA, benchmarks",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Denoise a grayscale PGM image with nonlocal low-rank shrinkage
    Denoise(commands::DenoiseArgs),
    /// Decompose a matrix, frame directory, or synthetic instance into
    /// low-rank + sparse parts
    Rpca(commands::RpcaArgs),
    /// Phase-transition sweep over a (rank fraction, corruption fraction)
    /// grid
    Sweep(commands::SweepArgs),
    /// Recovery-accuracy table over a list of true ranks
    Table(commands::TableArgs),
    /// Apply the weighted Schatten p-norm proximal operator to one matrix
    Prox(commands::ProxArgs),
    /// Compute one metric: psnr, rel_err, or similarity
    Metrics(commands::MetricsArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Denoise(args) => commands::cmd_denoise(args),
        Command::Rpca(args) => commands::cmd_rpca(args),
        Command::Sweep(args) => commands::cmd_sweep(args),
        Command::Table(args) => commands::cmd_table(args),
        Command::Prox(args) => commands::cmd_prox(args),
        Command::Metrics(args) => commands::cmd_metrics(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
