//! `repa`: simulate and fit directed preferential attachment networks with
//! class-dependent reciprocity.

mod cmd_data;
mod cmd_fit;
mod config;
mod doc;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "repa",
    version,
    about = "Reciprocal preferential attachment networks: simulation, preprocessing and inference",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug)]
struct CommonArgs {
    /// Flat key = value config file; flags override config entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs (created if missing).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Thread count for replicate/chain fan-out (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct LogInputArgs {
    /// Event-log CSV (k,scenario,source,target,reciprocated).
    #[arg(long)]
    events: PathBuf,
    /// Seed-graph JSON sidecar.
    #[arg(long)]
    seed_graph: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an event log from the generative model.
    Simulate(cmd_data::SimulateArgs),
    /// Convert a raw temporal edgelist into an event log.
    Ingest(cmd_data::IngestArgs),
    /// Tail threshold, tail exponent and angular values of a log.
    Extremes(cmd_data::ExtremesArgs),
    /// Maximum likelihood for the attachment parameters.
    FitTheta(cmd_fit::FitThetaArgs),
    /// Fixed-K Gibbs sampler for the reciprocity mixture.
    FitGibbs(cmd_fit::FitGibbsArgs),
    /// Telescoping sampler with unknown component count.
    FitTelescope(cmd_fit::FitTelescopeArgs),
    /// Coordinate-ascent variational Bayes.
    FitCavi(cmd_fit::FitCaviArgs),
    /// Variational EM.
    FitVem(cmd_fit::FitVemArgs),
    /// Choose K from a set of fit files.
    SelectK(cmd_fit::SelectKArgs),
    /// Aggregate replicate fits and selections into one table.
    Report(cmd_fit::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(args) => cmd_data::simulate(args),
        Cmd::Ingest(args) => cmd_data::ingest(args),
        Cmd::Extremes(args) => cmd_data::extremes(args),
        Cmd::FitTheta(args) => cmd_fit::fit_theta(args),
        Cmd::FitGibbs(args) => cmd_fit::fit_gibbs(args),
        Cmd::FitTelescope(args) => cmd_fit::fit_telescope(args),
        Cmd::FitCavi(args) => cmd_fit::fit_cavi(args),
        Cmd::FitVem(args) => cmd_fit::fit_vem(args),
        Cmd::SelectK(args) => cmd_fit::select_k(args),
        Cmd::Report(args) => cmd_fit::report(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
