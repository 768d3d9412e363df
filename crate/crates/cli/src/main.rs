//! Command-line front end: dataset ingestion, the calibrate-then-filter
//! pipeline, simulation, and the benchmark experiments.
//!
//! Exit codes: 0 success, 2 validation failure (bad files, shapes,
//! negative entries), 3 numerical failure (fit or filter breakdown).

mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nettomo_core::io as core_io;

#[derive(Parser)]
#[command(name = "nettomo", version, about = "Origin-destination traffic inference from link counters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset: shapes, nonnegativity, rank, truth consistency.
    Ingest(IngestArgs),
    /// Run the full pipeline: stage-1 calibration, prior construction, and
    /// the particle filter; writes estimates, diagnostics and a manifest.
    Run(Box<RunArgs>),
    /// Simulate a dataset from the multilevel model and write it as CSVs.
    Simulate(SimulateArgs),
    /// Run a benchmark experiment from a TOML config.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Routing matrix CSV (counters x routes).
    #[arg(long)]
    routing: PathBuf,
    /// Link counter series CSV (epochs x counters).
    #[arg(long)]
    links: PathBuf,
    /// Ground-truth route series CSV (epochs x routes).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    routing: Option<PathBuf>,
    #[arg(long)]
    links: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Stage-1 calibration: ssm | gravity | naive.
    #[arg(long, default_value = "ssm")]
    stage1: String,
    /// Node-to-counter map CSV (node,out_counter,in_counter), needed by the
    /// gravity stage on custom datasets.
    #[arg(long)]
    node_map: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    /// Move sweeps per epoch.
    #[arg(long, default_value_t = 10)]
    move_iters: usize,
    /// Random-direction steps per proposal draw.
    #[arg(long, default_value_t = 50)]
    rda_steps: usize,
    /// Calibration window width (odd).
    #[arg(long, default_value_t = 23)]
    window: usize,
    /// Intensity autocorrelation of the multilevel model.
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    /// Intensity-to-variance power.
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
    /// Gamma shape; defaults to half the route count.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Resampling scheme: systematic | multinomial.
    #[arg(long, default_value = "systematic")]
    resampling: String,
    /// Write the binary particle dump next to the estimates.
    #[arg(long, default_value_t = false)]
    dump_particles: bool,
    /// Re-run a recorded manifest; its values override the other flags.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Topology: star:<d> | chain:<k> | two-router:<l>,<r>.
    #[arg(long, default_value = "star:3")]
    topology: String,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Autocorrelation of the generated intensity walk.
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Fix the scale parameter instead of drawing it per epoch.
    #[arg(long)]
    phi: Option<f64>,
    /// Median of the log-normal initial traffic draw.
    #[arg(long, default_value_t = 500.0)]
    init_median: f64,
    /// Geometric standard deviation of the initial traffic draw.
    #[arg(long, default_value_t = 6.0)]
    init_gsd: f64,
    #[arg(long, default_value = "sim")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Which design to run: relerr | starbench.
    design: String,
    /// TOML config; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Route-series pool CSV (starbench only).
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value = "experiment.csv")]
    out: PathBuf,
}

/// Exit classification: anything about files and shapes is a validation
/// failure; solver and filter breakdowns are numerical failures.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<core_io::IoError>().is_some()
            || cause.downcast_ref::<nettomo_core::network::NetworkError>().is_some()
            || cause.downcast_ref::<pipeline::ValidationError>().is_some()
        {
            return 2;
        }
        if cause.downcast_ref::<nettomo_core::gssm::GssmError>().is_some()
            || cause.downcast_ref::<nettomo_core::multilevel::MultilevelError>().is_some()
            || cause.downcast_ref::<nettomo_core::polytope::PolytopeError>().is_some()
            || cause.downcast_ref::<nettomo_core::simstudy::SimstudyError>().is_some()
            || cause.downcast_ref::<nettomo_core::calibrate::CalibrateError>().is_some()
        {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => pipeline::ingest(&args.routing, &args.links, args.truth.as_deref()),
        Command::Run(args) => pipeline::run(*args),
        Command::Simulate(args) => pipeline::simulate(args),
        Command::Experiment(args) => pipeline::experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
