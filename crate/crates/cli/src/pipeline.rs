//! Command implementations.

use std::path::Path;

use anyhow::Context;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Deserialize;
use thiserror::Error;

use nettomo_core::baselines::{gravity, node_totals_from_counters, CounterMap};
use nettomo_core::calibrate::{
    correct_and_smooth, estimate_variance, naive_priors, priors_from_gravity, priors_from_ssm,
    PriorSchedule,
};
use nettomo_core::gssm::{fit_sliding, FitOptions};
use nettomo_core::io as core_io;
use nettomo_core::multilevel::{sirm_filter, FilterConfig, Resampling};
use nettomo_core::network::{RoutingMatrix, Topology};
use nettomo_core::simstudy::{
    l_errors, run_relerr_experiment, run_star_benchmark, RelErrConfig, StarBenchConfig,
};

use crate::manifest::{Manifest, RunConfig};
use crate::{ExperimentArgs, RunArgs, SimulateArgs};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("--{0} is required")]
    MissingArg(&'static str),
    #[error("unknown stage1 '{0}' (expected ssm, gravity or naive)")]
    UnknownStage1(String),
    #[error("unknown resampling '{0}' (expected systematic or multinomial)")]
    UnknownResampling(String),
    #[error("stage1=gravity needs --node-map for datasets without a built-in counter layout")]
    NodeMapRequired,
    #[error("cannot parse topology '{0}' (expected star:<d>, chain:<k> or two-router:<l>,<r>)")]
    BadTopology(String),
    #[error("node map row {row}: {message}")]
    BadNodeMap { row: usize, message: String },
    #[error("experiment design '{0}' unknown (expected relerr or starbench)")]
    UnknownDesign(String),
    #[error("starbench needs --pool")]
    PoolRequired,
}

pub fn ingest(routing: &Path, links: &Path, truth: Option<&Path>) -> anyhow::Result<()> {
    let (_, report) = core_io::ingest(routing, links, truth)?;
    println!(
        "dataset ok: {} epochs, {} counters ({} independent, {} redundant), {} routes, polytope dimension {}",
        report.t_len,
        report.m,
        report.rank,
        report.redundant_rows,
        report.n,
        report.n - report.rank
    );
    if report.truth_violations.is_empty() {
        if truth.is_some() {
            println!("truth consistent with counters at every epoch (<=1e-6 relative)");
        }
    } else {
        println!(
            "truth violates the counters at {} epoch(s); worst relative residual {:.3e}",
            report.truth_violations.len(),
            report
                .truth_violations
                .iter()
                .map(|(_, r)| *r)
                .fold(0.0f64, f64::max)
        );
    }
    Ok(())
}

fn parse_topology(s: &str) -> Result<Topology, ValidationError> {
    let bad = || ValidationError::BadTopology(s.to_string());
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "star" => Ok(Topology::Star { nodes: rest.parse().map_err(|_| bad())? }),
        "chain" => Ok(Topology::Chain { nodes: rest.parse().map_err(|_| bad())? }),
        "two-router" => {
            let (l, r) = rest.split_once(',').ok_or_else(bad)?;
            Ok(Topology::TwoRouter {
                left: l.parse().map_err(|_| bad())?,
                right: r.parse().map_err(|_| bad())?,
            })
        }
        _ => Err(bad()),
    }
}

/// Node map CSV: `node,out_counter,in_counter` with counter names matching
/// the routing matrix rows.
fn load_counter_map(path: &Path, a: &RoutingMatrix) -> anyhow::Result<CounterMap> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    let find = |name: &str| a.row_names().iter().position(|n| n == name);
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let node: usize = record
            .get(0)
            .and_then(|v| v.trim().parse().ok())
            .ok_or(ValidationError::BadNodeMap { row, message: "bad node index".into() })?;
        let oc = record
            .get(1)
            .map(str::trim)
            .and_then(find)
            .ok_or(ValidationError::BadNodeMap { row, message: "unknown out counter".into() })?;
        let ic = record
            .get(2)
            .map(str::trim)
            .and_then(find)
            .ok_or(ValidationError::BadNodeMap { row, message: "unknown in counter".into() })?;
        out.push((node, oc, ic));
    }
    let d = out.iter().map(|(n, _, _)| n + 1).max().unwrap_or(0);
    let mut map = CounterMap { outbound: vec![None; d], inbound: vec![None; d] };
    for (node, oc, ic) in out {
        map.outbound[node] = Some(oc);
        map.inbound[node] = Some(ic);
    }
    Ok(map)
}

fn gravity_path(
    y: &DMatrix<f64>,
    a: &RoutingMatrix,
    map: &CounterMap,
) -> anyhow::Result<DMatrix<f64>> {
    let t_len = y.nrows();
    let mut x = DMatrix::zeros(t_len, a.n());
    for t in 0..t_len {
        let totals = node_totals_from_counters(&y.row(t).transpose(), a, map)?;
        let g = gravity(&totals);
        for j in 0..a.n() {
            x[(t, j)] = g[j];
        }
    }
    Ok(x)
}

pub fn run(args: RunArgs) -> anyhow::Result<()> {
    let config = match &args.from_manifest {
        Some(path) => Manifest::load(path)?.config,
        None => RunConfig {
            routing: args.routing.clone().ok_or(ValidationError::MissingArg("routing"))?,
            links: args.links.clone().ok_or(ValidationError::MissingArg("links"))?,
            truth: args.truth.clone(),
            stage1: args.stage1.clone(),
            node_map: args.node_map.clone(),
            particles: args.particles,
            move_iters: args.move_iters,
            rda_steps: args.rda_steps,
            window: args.window,
            rho: args.rho,
            tau: args.tau,
            alpha: args.alpha,
            seed: args.seed,
            resampling: args.resampling.clone(),
            dump_particles: args.dump_particles,
        },
    };
    let out_dir = args.out_dir.clone();
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let resampling = match config.resampling.as_str() {
        "systematic" => Resampling::Systematic,
        "multinomial" => Resampling::Multinomial,
        other => return Err(ValidationError::UnknownResampling(other.to_string()).into()),
    };

    let (dataset, report) =
        core_io::ingest(&config.routing, &config.links, config.truth.as_deref())?;
    let a = &dataset.routing;
    let n = a.n();
    let t_len = report.t_len;

    // Stage 1: calibrate the prior schedules.
    let mut stage1_estimate: Option<DMatrix<f64>> = None;
    let mut priors: PriorSchedule = match config.stage1.as_str() {
        "naive" => naive_priors(n, t_len).with_rho(config.rho),
        "ssm" => {
            let opts = FitOptions { window: config.window, parallel: true, ..Default::default() };
            let fit = fit_sliding(&dataset.y, a, &opts)?;
            core_io::write_fit_csv(&out_dir.join("stage1_fit.csv"), &fit, a.col_names())?;
            let corrected = correct_and_smooth(&fit.x_hat, a, &dataset.y, 5)?;
            let v_hat = estimate_variance(&corrected.x, config.window);
            let schedule = priors_from_ssm(&corrected.x, &v_hat, &fit.phi_hat, config.rho)?;
            stage1_estimate = Some(corrected.x);
            schedule
        }
        "gravity" => {
            let map = match &config.node_map {
                Some(p) => load_counter_map(p, a)?,
                None => return Err(ValidationError::NodeMapRequired.into()),
            };
            let x_grav = gravity_path(&dataset.y, a, &map)?;
            let corrected = correct_and_smooth(&x_grav, a, &dataset.y, 5)?;
            let schedule = priors_from_gravity(&corrected.x, config.rho)?;
            stage1_estimate = Some(corrected.x);
            schedule
        }
        other => return Err(ValidationError::UnknownStage1(other.to_string()).into()),
    };
    priors.tau = config.tau;
    if let Some(alpha) = config.alpha {
        priors.alpha = alpha;
    }
    if let Some(x) = &stage1_estimate {
        core_io::write_series_csv(&out_dir.join("stage1_estimates.csv"), a.col_names(), x)?;
    }
    core_io::write_priors_csv(
        &out_dir.join("priors.csv"),
        &out_dir.join("priors_scalars.csv"),
        &priors,
        a.col_names(),
    )?;

    let filter_cfg = FilterConfig {
        n_particles: config.particles,
        n_move: config.move_iters,
        rda_steps_per_draw: config.rda_steps,
        resampling,
        seed: config.seed,
        particle_dump: config.dump_particles.then(|| out_dir.join("particles.bin")),
        ..Default::default()
    };
    let output = sirm_filter(&dataset.y, a, &priors, &filter_cfg)?;

    core_io::write_estimates_csv(&out_dir.join("estimates.csv"), &output.summary, a.col_names())?;
    core_io::write_diagnostics_csv(
        &out_dir.join("diagnostics.csv"),
        &output.summary.ess,
        &output.diagnostics,
    )?;

    if let Some(truth) = &dataset.truth {
        let mut rows = vec![("sirm_posterior_mean".to_string(), l_errors(&output.summary.mean, truth)?)];
        if let Some(x) = &stage1_estimate {
            rows.push(("stage1".to_string(), l_errors(x, truth)?));
        }
        core_io::write_metrics_csv(&out_dir.join("metrics.csv"), &rows)?;
    }

    let manifest = Manifest::for_run(config)?;
    manifest.write(&out_dir.join("manifest.json"))?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let topology = parse_topology(&args.topology)?;
    let a = topology.routing_matrix()?;
    let n = a.n();
    std::fs::create_dir_all(&args.out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let lognormal = LogNormal::new(args.init_median.ln(), args.init_gsd.ln())
        .context("invalid init distribution")?;
    let lambda0 = DVector::from_fn(n, |_, _| lognormal.sample(&mut rng));
    let priors = naive_priors(n, args.epochs).with_rho(args.rho);
    let sim =
        nettomo_core::multilevel::simulate(&priors, args.phi, &lambda0, args.epochs, &a, &mut rng)?;

    core_io::write_routing_csv(&args.out_dir.join("routing.csv"), &a)?;
    core_io::write_series_csv(&args.out_dir.join("links.csv"), a.row_names(), &sim.y)?;
    core_io::write_series_csv(&args.out_dir.join("truth.csv"), a.col_names(), &sim.x)?;
    core_io::write_series_csv(&args.out_dir.join("intensities.csv"), a.col_names(), &sim.lambda)?;
    println!(
        "simulated {} epochs on {} ({} counters, {} routes) into {}",
        args.epochs,
        args.topology,
        a.m(),
        n,
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RelErrToml {
    topologies: Option<Vec<String>>,
    reps: Option<usize>,
    t_len: Option<usize>,
    particles: Option<usize>,
    n_move: Option<usize>,
    rda_steps: Option<usize>,
    rho: Option<f64>,
    rho_filter: Option<f64>,
    window: Option<usize>,
    seed: Option<u64>,
    init_median: Option<f64>,
    init_gsd: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StarBenchToml {
    node_counts: Option<Vec<usize>>,
    reps: Option<usize>,
    particles: Option<usize>,
    n_move: Option<usize>,
    rda_steps: Option<usize>,
    rho: Option<f64>,
    window: Option<usize>,
    seed: Option<u64>,
    max_epochs: Option<usize>,
}

pub fn experiment(args: ExperimentArgs) -> anyhow::Result<()> {
    match args.design.as_str() {
        "relerr" => {
            let mut cfg = RelErrConfig::default();
            if let Some(path) = &args.config {
                let text = std::fs::read_to_string(path)?;
                let t: RelErrToml = toml::from_str(&text)?;
                if let Some(topos) = t.topologies {
                    cfg.topologies = topos
                        .iter()
                        .map(|s| parse_topology(s))
                        .collect::<Result<_, _>>()?;
                }
                macro_rules! set {
                    ($($f:ident),*) => { $(if let Some(v) = t.$f { cfg.$f = v; })* };
                }
                set!(reps, t_len, particles, n_move, rda_steps, rho, rho_filter, window, seed, init_median, init_gsd);
            }
            let table = run_relerr_experiment(&cfg)?;
            core_io::write_relerr_csv(&args.out, &table)?;
            for topo in ["chain3", "star3", "star4"] {
                let ratios = table.relative_l2(topo);
                if !ratios.is_empty() {
                    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
                    println!("{topo}: mean naive/two-stage relative L2 {mean:.3} over {} reps", ratios.len());
                }
            }
            println!("wrote {} rows to {} ({} failures)", table.rows.len(), args.out.display(), table.failures);
        }
        "starbench" => {
            let pool_path = args.pool.as_ref().ok_or(ValidationError::PoolRequired)?;
            let (_, pool) = core_io::read_series_csv(pool_path)?;
            let mut cfg = StarBenchConfig::default();
            if let Some(path) = &args.config {
                let text = std::fs::read_to_string(path)?;
                let t: StarBenchToml = toml::from_str(&text)?;
                macro_rules! set {
                    ($($f:ident),*) => { $(if let Some(v) = t.$f { cfg.$f = v; })* };
                }
                set!(node_counts, reps, particles, n_move, rda_steps, rho, window, seed);
                cfg.max_epochs = t.max_epochs.or(cfg.max_epochs);
            }
            let table = run_star_benchmark(&cfg, &pool)?;
            core_io::write_bench_csv(&args.out, &table)?;
            println!("wrote {} rows to {} ({} failures)", table.rows.len(), args.out.display(), table.failures);
        }
        other => return Err(ValidationError::UnknownDesign(other.to_string()).into()),
    }
    Ok(())
}
