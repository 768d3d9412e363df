//! Simulation designs comparing the estimators.
//!
//! Two harnesses: a model-simulated comparison of the naive-prior filter
//! against the two-stage pipeline across polytope dimensions, and a
//! star-topology benchmark that mixes real route series through synthetic
//! routing matrices and scores five methods against the IPFP baseline,
//! exporting a covariate-ready table (method, dimension, sparsity, errors).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::calibrate::{
    correct_and_smooth, estimate_variance, naive_priors, priors_from_ssm, PriorSchedule,
};
use crate::gssm::{fit_sliding, FitOptions};
use crate::multilevel::{simulate, sirm_filter, FilterConfig};
use crate::network::Topology;
use crate::polytope::{ipfp, IpfpOptions};
use crate::baselines::{gravity, node_totals_from_counters, CounterMap};

#[derive(Debug, Error)]
pub enum SimstudyError {
    #[error("estimate shape {got:?} does not match truth {expected:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("route pool has {available} series but {needed} are needed")]
    PoolTooSmall { available: usize, needed: usize },
    #[error("series of {t_len} epochs is shorter than the fit window {window}")]
    SeriesTooShort { t_len: usize, window: usize },
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Gssm(#[from] crate::gssm::GssmError),
    #[error(transparent)]
    Calibrate(#[from] crate::calibrate::CalibrateError),
    #[error(transparent)]
    Multilevel(#[from] crate::multilevel::MultilevelError),
    #[error(transparent)]
    Polytope(#[from] crate::polytope::PolytopeError),
    #[error(transparent)]
    Baseline(#[from] crate::baselines::BaselineError),
}

/// Mean per-epoch L1/L2 estimation errors with standard errors over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LErrors {
    pub mean_l1: f64,
    pub se_l1: f64,
    pub mean_l2: f64,
    pub se_l2: f64,
}

/// Per-epoch vector-norm errors, averaged over epochs; the standard error
/// is the epoch-to-epoch standard deviation over sqrt(T).
pub fn l_errors(x_hat: &DMatrix<f64>, x_true: &DMatrix<f64>) -> Result<LErrors, SimstudyError> {
    if x_hat.shape() != x_true.shape() {
        return Err(SimstudyError::ShapeMismatch { expected: x_true.shape(), got: x_hat.shape() });
    }
    let (t_len, n) = x_true.shape();
    let mut l1 = Vec::with_capacity(t_len);
    let mut l2 = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut abs = 0.0;
        let mut sq = 0.0;
        for j in 0..n {
            let d = x_hat[(t, j)] - x_true[(t, j)];
            abs += d.abs();
            sq += d * d;
        }
        l1.push(abs);
        l2.push(sq.sqrt());
    }
    let stats = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        } else {
            0.0
        };
        (mean, (var / v.len() as f64).sqrt())
    };
    let (mean_l1, se_l1) = stats(&l1);
    let (mean_l2, se_l2) = stats(&l2);
    Ok(LErrors { mean_l1, se_l1, mean_l2, se_l2 })
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RelErrConfig {
    pub topologies: Vec<Topology>,
    pub reps: usize,
    pub t_len: usize,
    pub particles: usize,
    pub n_move: usize,
    pub rda_steps: usize,
    /// Intensity autocorrelation of the generator.
    pub rho: f64,
    /// Fixed autocorrelation constant used by both filters.
    pub rho_filter: f64,
    /// Calibration-model window width.
    pub window: usize,
    pub seed: u64,
    pub parallel: bool,
    /// Median of the log-normal initial traffic draw.
    pub init_median: f64,
    /// Geometric standard deviation of the initial traffic draw.
    pub init_gsd: f64,
}

impl Default for RelErrConfig {
    fn default() -> Self {
        Self {
            topologies: vec![
                Topology::Chain { nodes: 3 },
                Topology::Star { nodes: 3 },
                Topology::Star { nodes: 4 },
            ],
            reps: 30,
            t_len: 300,
            particles: 1000,
            n_move: 10,
            rda_steps: 50,
            rho: 0.5,
            rho_filter: 0.9,
            window: 23,
            seed: 0,
            parallel: true,
            init_median: 500.0,
            init_gsd: 6.0,
        }
    }
}

/// Per-epoch gravity estimates for every epoch of a counter series.
fn gravity_path(
    y: &DMatrix<f64>,
    a: &crate::network::RoutingMatrix,
    map: &CounterMap,
) -> Result<DMatrix<f64>, SimstudyError> {
    let t_len = y.nrows();
    let n = a.n();
    let mut x = DMatrix::zeros(t_len, n);
    for t in 0..t_len {
        let totals = node_totals_from_counters(&y.row(t).transpose(), a, map)?;
        let g = gravity(&totals);
        for j in 0..n {
            x[(t, j)] = g[j];
        }
    }
    Ok(x)
}

/// Two-stage prior schedule from per-epoch gravity estimates: corrected and
/// median-smoothed, with increment drift, estimator-variance spread, and
/// the fixed Gamma-prior scale (beta = 1.5).
fn two_stage_priors(
    y: &DMatrix<f64>,
    a: &crate::network::RoutingMatrix,
    map: &CounterMap,
    window: usize,
    rho: f64,
) -> Result<PriorSchedule, SimstudyError> {
    let x_grav = gravity_path(y, a, map)?;
    let corrected = correct_and_smooth(&x_grav, a, y, 5)?;
    let v_hat = estimate_variance(&corrected.x, window);
    // beta_t = ln(1 + phi_hat) pinned at the fixed default 1.5.
    let phi_hat = DVector::from_element(y.nrows(), 1.5f64.exp() - 1.0);
    Ok(priors_from_ssm(&corrected.x, &v_hat, &phi_hat, rho)?)
}

#[derive(Debug, Clone)]
pub struct RelErrRow {
    pub topology: String,
    pub dim: usize,
    pub rep: usize,
    pub method: String,
    pub errors: LErrors,
    /// Median per-epoch effective sample size of the run.
    pub median_ess: f64,
}

#[derive(Debug, Clone)]
pub struct RelErrTable {
    pub rows: Vec<RelErrRow>,
    /// Replicates dropped because a filter failed.
    pub failures: usize,
}

impl RelErrTable {
    /// Per-replicate ratio of naive to two-stage mean L2 error for one
    /// topology label.
    pub fn relative_l2(&self, topology: &str) -> Vec<f64> {
        let mut by_rep: std::collections::BTreeMap<usize, (Option<f64>, Option<f64>)> =
            Default::default();
        for row in self.rows.iter().filter(|r| r.topology == topology) {
            let slot = by_rep.entry(row.rep).or_default();
            match row.method.as_str() {
                "naive" => slot.0 = Some(row.errors.mean_l2),
                "two_stage" => slot.1 = Some(row.errors.mean_l2),
                _ => {}
            }
        }
        by_rep
            .values()
            .filter_map(|(n, t)| match (n, t) {
                (Some(n), Some(t)) if *t > 0.0 => Some(n / t),
                _ => None,
            })
            .collect()
    }
}

fn topology_label(t: &Topology) -> String {
    match t {
        Topology::Star { nodes } => format!("star{nodes}"),
        Topology::Chain { nodes } => format!("chain{nodes}"),
        Topology::TwoRouter { left, right } => format!("two_router{left}_{right}"),
        Topology::Custom { .. } => "custom".to_string(),
    }
}

/// Simulate from the multilevel model and score the naive-prior filter
/// against the two-stage pipeline, per topology and replicate.
pub fn run_relerr_experiment(cfg: &RelErrConfig) -> Result<RelErrTable, SimstudyError> {
    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (ti, topo) in cfg.topologies.iter().enumerate() {
        let a = topo.routing_matrix()?;
        let map = CounterMap::for_topology(topo)
            .ok_or(SimstudyError::ShapeMismatch { expected: (0, 0), got: (0, 0) })?;
        let n = a.n();
        let label = topology_label(topo);
        for rep in 0..cfg.reps {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, ti as u64, rep as u64));
            let lognormal =
                LogNormal::new(cfg.init_median.ln(), cfg.init_gsd.ln()).expect("valid log-normal");
            let lambda0 = DVector::from_fn(n, |_, _| lognormal.sample(&mut rng));
            // The generator runs at the experiment's autocorrelation; both
            // filters keep the fixed inference constant.
            let gen_priors = naive_priors(n, cfg.t_len).with_rho(cfg.rho);
            let sim = simulate(&gen_priors, None, &lambda0, cfg.t_len, &a, &mut rng)?;

            let filter_cfg = |seed_tag: u64| FilterConfig {
                n_particles: cfg.particles,
                n_move: cfg.n_move,
                rda_steps_per_draw: cfg.rda_steps,
                seed: mix_seed(cfg.seed, (ti * 1000 + rep) as u64, seed_tag),
                parallel: cfg.parallel,
                ..Default::default()
            };

            let naive_schedule = naive_priors(n, cfg.t_len).with_rho(cfg.rho_filter);
            let naive_run = sirm_filter(&sim.y, &a, &naive_schedule, &filter_cfg(1));

            let two_stage_run = (|| -> Result<_, SimstudyError> {
                let priors = two_stage_priors(&sim.y, &a, &map, cfg.window, cfg.rho_filter)?;
                Ok(sirm_filter(&sim.y, &a, &priors, &filter_cfg(2))?)
            })();

            let median_ess = |ess: &DVector<f64>| {
                let mut v: Vec<f64> = ess.iter().cloned().collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v[v.len() / 2]
            };
            match (naive_run, two_stage_run) {
                (Ok(naive), Ok(two_stage)) => {
                    rows.push(RelErrRow {
                        topology: label.clone(),
                        dim: a.polytope_dim(),
                        rep,
                        method: "naive".into(),
                        errors: l_errors(&naive.summary.mean, &sim.x)?,
                        median_ess: median_ess(&naive.summary.ess),
                    });
                    rows.push(RelErrRow {
                        topology: label.clone(),
                        dim: a.polytope_dim(),
                        rep,
                        method: "two_stage".into(),
                        errors: l_errors(&two_stage.summary.mean, &sim.x)?,
                        median_ess: median_ess(&two_stage.summary.ess),
                    });
                }
                (naive, two_stage) => {
                    failures += 1;
                    if let Err(e) = naive {
                        log::warn!("{label} rep {rep}: naive filter failed: {e}");
                    }
                    if let Err(e) = two_stage {
                        log::warn!("{label} rep {rep}: two-stage failed: {e}");
                    }
                }
            }
        }
    }
    Ok(RelErrTable { rows, failures })
}

#[derive(Debug, Clone)]
pub struct StarBenchConfig {
    pub node_counts: Vec<usize>,
    pub reps: usize,
    pub particles: usize,
    pub n_move: usize,
    pub rda_steps: usize,
    /// Intensity autocorrelation used by the filters on real traffic.
    pub rho: f64,
    pub window: usize,
    pub seed: u64,
    pub parallel: bool,
    /// Truncate the pool to this many epochs (all of them when absent).
    pub max_epochs: Option<usize>,
}

impl Default for StarBenchConfig {
    fn default() -> Self {
        Self {
            node_counts: vec![3, 4, 5, 9],
            reps: 10,
            particles: 1000,
            n_move: 10,
            rda_steps: 50,
            rho: 0.9,
            window: 23,
            seed: 0,
            parallel: true,
            max_epochs: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub run: usize,
    pub topology: String,
    pub dim: usize,
    pub method: String,
    /// log10 of the average fraction of routes not deterministically zero.
    pub sparsity: f64,
    pub errors: LErrors,
}

#[derive(Debug, Clone)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub failures: usize,
}

/// Mix real route series (columns of `pool`) through star topologies and
/// score IPFP, gravity, the calibration model, and both filter variants.
pub fn run_star_benchmark(
    cfg: &StarBenchConfig,
    pool: &DMatrix<f64>,
) -> Result<BenchTable, SimstudyError> {
    let t_all = pool.nrows();
    let t_len = cfg.max_epochs.map_or(t_all, |c| c.min(t_all));
    if t_len < cfg.window {
        return Err(SimstudyError::SeriesTooShort { t_len, window: cfg.window });
    }
    let mut rows = Vec::new();
    let mut failures = 0usize;
    let mut run_id = 0usize;
    for (di, &d) in cfg.node_counts.iter().enumerate() {
        let topo = Topology::Star { nodes: d };
        let a = topo.routing_matrix()?;
        let n = d * d;
        if pool.ncols() < n {
            return Err(SimstudyError::PoolTooSmall { available: pool.ncols(), needed: n });
        }
        let map = CounterMap::for_topology(&topo).expect("built-in topology has a counter map");
        for rep in 0..cfg.reps {
            run_id += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, di as u64, rep as u64));
            let picked = rand::seq::index::sample(&mut rng, pool.ncols(), n).into_vec();
            let x_true = DMatrix::from_fn(t_len, n, |t, j| pool[(t, picked[j])].max(0.0));
            let mut y = DMatrix::zeros(t_len, a.m());
            for t in 0..t_len {
                let y_t = a.entries() * x_true.row(t).transpose();
                for i in 0..a.m() {
                    y[(t, i)] = y_t[i];
                }
            }

            // Sparsity covariate: fraction of routes not pinned by a zero
            // counter, averaged over epochs.
            let mut free_frac = 0.0;
            for t in 0..t_len {
                let mut forced = vec![false; n];
                for i in 0..a.m() {
                    if y[(t, i)] == 0.0 {
                        for j in 0..n {
                            if a.entries()[(i, j)] > 0.0 {
                                forced[j] = true;
                            }
                        }
                    }
                }
                let free = forced.iter().filter(|&&f| !f).count();
                free_frac += free as f64 / n as f64;
            }
            let sparsity = (free_frac / t_len as f64).log10();

            let mut push = |method: &str, x_hat: &DMatrix<f64>| -> Result<(), SimstudyError> {
                rows.push(BenchRow {
                    run: run_id,
                    topology: topology_label(&topo),
                    dim: a.polytope_dim(),
                    method: method.to_string(),
                    sparsity,
                    errors: l_errors(x_hat, &x_true)?,
                });
                Ok(())
            };

            // IPFP baseline, per epoch from a uniform seed.
            let mut x_ipfp = DMatrix::zeros(t_len, n);
            let total_a: f64 = a.entries().iter().sum();
            for t in 0..t_len {
                let y_t = y.row(t).transpose();
                let scale = (y_t.iter().sum::<f64>() / total_a).max(1e-9);
                let seed_vec = DVector::from_element(n, scale);
                let report = ipfp(&a, &y_t, &seed_vec, &IpfpOptions::default())?;
                for j in 0..n {
                    x_ipfp[(t, j)] = report.x[j];
                }
            }
            push("ipfp", &x_ipfp)?;

            // Gravity, per epoch from node totals.
            let mut x_grav = DMatrix::zeros(t_len, n);
            for t in 0..t_len {
                let totals = node_totals_from_counters(&y.row(t).transpose(), &a, &map)?;
                let g = gravity(&totals);
                for j in 0..n {
                    x_grav[(t, j)] = g[j];
                }
            }
            push("gravity", &x_grav)?;

            // Calibration model (state-space fit, corrected and smoothed).
            let fit_opts = FitOptions {
                window: cfg.window,
                parallel: cfg.parallel,
                init: crate::gssm::InitStrategy::Gravity(map.clone()),
                ..Default::default()
            };
            let calibration = (|| -> Result<_, SimstudyError> {
                let fit = fit_sliding(&y, &a, &fit_opts)?;
                let corrected = correct_and_smooth(&fit.x_hat, &a, &y, 5)?;
                Ok((fit, corrected))
            })();

            let filter_cfg = |tag: u64| FilterConfig {
                n_particles: cfg.particles,
                n_move: cfg.n_move,
                rda_steps_per_draw: cfg.rda_steps,
                seed: mix_seed(cfg.seed, (di * 1000 + rep) as u64, tag),
                parallel: cfg.parallel,
                ..Default::default()
            };

            match calibration {
                Ok((_fit, corrected)) => {
                    push("calibration", &corrected.x)?;
                }
                Err(e) => {
                    failures += 1;
                    log::warn!("star{d} rep {rep}: calibration failed: {e}");
                }
            }

            match two_stage_priors(&y, &a, &map, cfg.window, cfg.rho)
                .and_then(|priors| Ok(sirm_filter(&y, &a, &priors, &filter_cfg(2))?))
            {
                Ok(out) => push("two_stage", &out.summary.mean)?,
                Err(e) => {
                    failures += 1;
                    log::warn!("star{d} rep {rep}: two-stage filter failed: {e}");
                }
            }

            let naive = naive_priors(n, t_len).with_rho(cfg.rho);
            match sirm_filter(&y, &a, &naive, &filter_cfg(1)) {
                Ok(out) => push("naive", &out.summary.mean)?,
                Err(e) => {
                    failures += 1;
                    log::warn!("star{d} rep {rep}: naive filter failed: {e}");
                }
            }
        }
    }
    Ok(BenchTable { rows, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_star;

    #[test]
    fn l_errors_zero_and_constant_offset() {
        let x = DMatrix::from_fn(5, 3, |t, j| (t + j) as f64);
        let z = l_errors(&x, &x).unwrap();
        assert_eq!(z.mean_l1, 0.0);
        assert_eq!(z.mean_l2, 0.0);
        assert_eq!(z.se_l2, 0.0);

        let c = 0.7;
        let shifted = x.map(|v| v + c);
        let e = l_errors(&shifted, &x).unwrap();
        assert!((e.mean_l1 - 3.0 * c).abs() < 1e-12);
        assert!((e.mean_l2 - c * 3.0f64.sqrt()).abs() < 1e-12);
        assert!(e.se_l1 < 1e-12);
    }

    #[test]
    fn l_errors_matches_two_loop_reference() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let (t_len, n) = (14, 6);
        let a = DMatrix::from_fn(t_len, n, |_, _| rng.random_range(0.0..9.0));
        let b = DMatrix::from_fn(t_len, n, |_, _| rng.random_range(0.0..9.0));
        let got = l_errors(&a, &b).unwrap();

        // Plain reference computation.
        let mut l1s = vec![0.0; t_len];
        let mut l2s = vec![0.0; t_len];
        for t in 0..t_len {
            for j in 0..n {
                let d: f64 = a[(t, j)] - b[(t, j)];
                l1s[t] += d.abs();
                l2s[t] += d * d;
            }
            l2s[t] = l2s[t].sqrt();
        }
        let m1 = l1s.iter().sum::<f64>() / t_len as f64;
        let m2 = l2s.iter().sum::<f64>() / t_len as f64;
        assert!((got.mean_l1 - m1).abs() < 1e-12);
        assert!((got.mean_l2 - m2).abs() < 1e-12);
    }

    #[test]
    fn l_errors_invariant_under_route_permutation() {
        let x_true = DMatrix::from_fn(8, 4, |t, j| (t * 4 + j) as f64);
        let x_hat = x_true.map(|v| v + 0.3);
        let base = l_errors(&x_hat, &x_true).unwrap();
        let perm = [2usize, 0, 3, 1];
        let pt = DMatrix::from_fn(8, 4, |t, j| x_true[(t, perm[j])]);
        let ph = DMatrix::from_fn(8, 4, |t, j| x_hat[(t, perm[j])]);
        let permuted = l_errors(&ph, &pt).unwrap();
        assert_eq!(base, permuted);
    }

    #[test]
    fn l_errors_shape_mismatch() {
        let a = DMatrix::zeros(3, 2);
        let b = DMatrix::zeros(3, 3);
        assert!(matches!(l_errors(&a, &b), Err(SimstudyError::ShapeMismatch { .. })));
    }

    #[test]
    fn relerr_experiment_tiny_run_is_reproducible() {
        let cfg = RelErrConfig {
            topologies: vec![Topology::Chain { nodes: 3 }],
            reps: 1,
            t_len: 30,
            particles: 40,
            n_move: 2,
            rda_steps: 10,
            window: 15,
            seed: 11,
            ..Default::default()
        };
        let t1 = run_relerr_experiment(&cfg).unwrap();
        let t2 = run_relerr_experiment(&cfg).unwrap();
        assert_eq!(t1.rows.len(), 2);
        assert_eq!(t1.failures, 0);
        for (r1, r2) in t1.rows.iter().zip(&t2.rows) {
            assert_eq!(r1.errors, r2.errors);
            assert_eq!(r1.method, r2.method);
        }
        let ratios = t1.relative_l2("chain3");
        assert_eq!(ratios.len(), 1);
        assert!(ratios[0].is_finite() && ratios[0] > 0.0);
    }

    #[test]
    fn star_benchmark_structure() {
        // Tiny synthetic pool: 16 routes, mildly sparse.
        let t_len = 30;
        let pool = DMatrix::from_fn(t_len, 16, |t, j| {
            let v = ((t * 7 + j * 13) % 9) as f64;
            if j % 5 == 0 && t % 4 == 0 {
                0.0
            } else {
                v + 1.0
            }
        });
        let cfg = StarBenchConfig {
            node_counts: vec![3],
            reps: 2,
            particles: 30,
            n_move: 2,
            rda_steps: 10,
            window: 15,
            seed: 5,
            ..Default::default()
        };
        let table = run_star_benchmark(&cfg, &pool).unwrap();
        assert_eq!(table.failures, 0);
        // 5 methods x 2 reps.
        assert_eq!(table.rows.len(), 10);
        let methods: std::collections::BTreeSet<_> =
            table.rows.iter().map(|r| r.method.clone()).collect();
        assert_eq!(
            methods.into_iter().collect::<Vec<_>>(),
            vec!["calibration", "gravity", "ipfp", "naive", "two_stage"]
        );
        for row in &table.rows {
            assert!(row.sparsity <= 0.0);
            assert_eq!(row.dim, 4);
            assert!(row.errors.mean_l2.is_finite());
        }
        // IPFP rows exist for every run (it is the reference method).
        let ipfp_runs: Vec<_> =
            table.rows.iter().filter(|r| r.method == "ipfp").map(|r| r.run).collect();
        assert_eq!(ipfp_runs.len(), 2);
    }

    #[test]
    fn star_benchmark_sparsity_zero_when_no_zero_counters() {
        let t_len = 25;
        let pool = DMatrix::from_fn(t_len, 9, |t, j| 1.0 + ((t + j) % 3) as f64);
        let cfg = StarBenchConfig {
            node_counts: vec![3],
            reps: 1,
            particles: 25,
            n_move: 1,
            rda_steps: 8,
            window: 15,
            seed: 6,
            ..Default::default()
        };
        let table = run_star_benchmark(&cfg, &pool).unwrap();
        for row in &table.rows {
            assert_eq!(row.sparsity, 0.0);
        }
    }

    #[test]
    fn star_benchmark_pool_too_small() {
        let pool = DMatrix::from_element(30, 4, 1.0);
        let cfg = StarBenchConfig {
            node_counts: vec![3],
            reps: 1,
            window: 15,
            ..Default::default()
        };
        assert!(matches!(
            run_star_benchmark(&cfg, &pool),
            Err(SimstudyError::PoolTooSmall { available: 4, needed: 9 })
        ));
        let _ = build_star(3).unwrap();
    }
}
