//! Batch experiment runner: every subcommand reads its parameters from an
//! optional config file overridden by flags, computes through the library,
//! and writes CSV/JSON artifacts stamped with the effective config hash.
//!
//! Exit codes: 0 success, 1 compute failure (partial outputs removed),
//! 2 usage or configuration error.

mod artifact;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "lamperti", version, about = "Near-critical chain experiments")]
struct Cli {
    /// Flat key = value config file with [section] headers.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $LAMPERTI_OUT or ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the Monte Carlo pools (default: all cores).
    /// Results never depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed; every experiment is a pure function of it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the return probability with its certified bracket and ratio
    /// diagnostics.
    SolveH(commands::SolveHArgs),
    /// Conditioned kernel and its increment moments.
    Transform(commands::TransformArgs),
    /// Drift scan of the Lyapunov family.
    Lyapunov(commands::LyapunovArgs),
    /// Monte Carlo excursion estimators and the strong-transience scan.
    Simulate(commands::SimulateArgs),
    /// Entrance-distribution coupling experiment.
    Coupling(commands::CouplingArgs),
    /// Renewal-function estimator.
    Renewal(commands::RenewalArgs),
    /// Lattice random walk return-mass curves.
    Rwalk(commands::RwalkArgs),
    /// Integral criterion probe along a grid of t values.
    ChungFuchs(commands::ChungFuchsArgs),
    /// Branching process with migration: moments, extinction, or one path.
    Branching(commands::BranchingArgs),
    /// Theoretical classification of beta-strong transience.
    Classify(commands::ClassifyArgs),
    /// Collate prior run summaries into a comparison table.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(n) = cli.workers {
        if n > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: worker pool: {e}");
                return ExitCode::from(2);
            }
        }
    }

    let file_cfg = match &cli.config {
        Some(path) => match config::Config::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
        },
        None => config::Config::default(),
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("LAMPERTI_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let ctx = commands::Ctx { file_cfg, out_dir, seed_flag: cli.seed };
    let result = match cli.cmd {
        Cmd::SolveH(a) => commands::solve_h(&ctx, a),
        Cmd::Transform(a) => commands::transform(&ctx, a),
        Cmd::Lyapunov(a) => commands::lyapunov(&ctx, a),
        Cmd::Simulate(a) => commands::simulate(&ctx, a),
        Cmd::Coupling(a) => commands::coupling(&ctx, a),
        Cmd::Renewal(a) => commands::renewal(&ctx, a),
        Cmd::Rwalk(a) => commands::rwalk(&ctx, a),
        Cmd::ChungFuchs(a) => commands::chung_fuchs(&ctx, a),
        Cmd::Branching(a) => commands::branching(&ctx, a),
        Cmd::Classify(a) => commands::classify(&ctx, a),
        Cmd::Report(a) => commands::report(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CmdError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(commands::CmdError::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
