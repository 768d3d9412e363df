//! Sample-importance-resample-move recursion on the solution polytopes.
//!
//! Per epoch: intensities are proposed from their dynamic prior and the
//! scale from its Gamma prior; traffic is proposed by a random-direction
//! walk targeting a truncated normal shared by all particles (mean
//! `rho * mean(lambda_{t-1})`, variance `(exp(beta_t)-1) mean^2`). Weights
//! are the model error density over the shared-proposal density; the
//! polytope normalizers of both truncated densities cancel across the
//! ensemble, while the componentwise truncation normalizers of the model
//! term are retained. After resampling, a Metropolis-within-Gibbs move
//! refreshes intensities (componentwise log random walk), the scale
//! (log random walk) and traffic (random-direction step).

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::calibrate::PriorSchedule;
use crate::network::RoutingMatrix;
use crate::polytope::{feasible_point, rda_step, sample_truncated_normal_polytope, Polytope};

use super::{
    ess, multinomial_indices, systematic_indices, FilterConfig,
    MultilevelError, Particle, PosteriorSummary, Resampling,
};

const LOG_LAMBDA_CLAMP: f64 = 300.0;
const LN_2PI: f64 = 1.8378770664093453;

/// Log of the Gaussian kernel with its variance factor. On the polytope the
/// componentwise truncation normalizers of the error model cancel against
/// the region's own normalization, so densities restricted to the feasible
/// region are compared through their kernels alone.
#[inline]
fn ln_kernel(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * d * d / var
}

/// Per-epoch acceptance rates and degeneracy bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct FilterDiagnostics {
    pub accept_lambda: Vec<f64>,
    pub accept_phi: Vec<f64>,
    pub accept_x: Vec<f64>,
    /// Epochs whose effective sample size fell below the configured
    /// threshold.
    pub low_ess_epochs: Vec<usize>,
    /// (epoch, attempts) pairs where the sample step had to be rerun with
    /// longer walks.
    pub restarts: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub summary: PosteriorSummary,
    pub diagnostics: FilterDiagnostics,
}

// Decorrelated RNG streams per (phase, epoch, slot); slot 0 is epoch-level
// work, slot 1 + j belongs to particle j.
fn stream_rng(seed: u64, phase: u64, t: usize, slot: usize, slots: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase.wrapping_mul(1 << 40).wrapping_add(t as u64 * slots + slot as u64));
    rng
}

struct Sampled {
    lambda: DVector<f64>,
    phi: f64,
    x: DVector<f64>,
    log_weight: f64,
}

fn model_log_density(x: &DVector<f64>, lambda: &DVector<f64>, phi: f64, tau: f64) -> f64 {
    let spread = phi.exp_m1().max(1e-300);
    let mut acc = 0.0;
    for k in 0..x.len() {
        let var = (lambda[k].powf(tau) * spread).max(1e-300);
        acc += ln_kernel(x[k].max(0.0), lambda[k], var);
    }
    acc
}

/// Gaussian exponent of the model error at fixed (lambda, phi); the
/// truncation normalizers are constant in x and drop out of Metropolis
/// ratios.
fn model_exponent<'a>(
    lambda: &'a DVector<f64>,
    var: &'a DVector<f64>,
) -> impl Fn(&DVector<f64>) -> f64 + 'a {
    move |x: &DVector<f64>| {
        let mut acc = 0.0;
        for k in 0..x.len() {
            let d = x[k] - lambda[k];
            acc -= 0.5 * d * d / var[k];
        }
        acc
    }
}

/// Run the filter over the whole series. `y` has one row per epoch.
pub fn sirm_filter(
    y: &DMatrix<f64>,
    a: &RoutingMatrix,
    priors: &PriorSchedule,
    cfg: &FilterConfig,
) -> Result<FilterOutput, MultilevelError> {
    cfg.validate()?;
    priors.validate().map_err(|_| MultilevelError::ShapeMismatch { what: "invalid prior schedule" })?;
    let t_len = y.nrows();
    let n = a.n();
    let j_count = cfg.n_particles;
    if y.ncols() != a.m() {
        return Err(MultilevelError::ShapeMismatch { what: "counter columns != routing rows" });
    }
    if priors.n() != n {
        return Err(MultilevelError::ShapeMismatch { what: "prior routes != routing columns" });
    }
    if priors.t_len() < t_len {
        return Err(MultilevelError::ShapeMismatch { what: "prior schedule shorter than series" });
    }
    let routing = Arc::new(a.clone());
    let slots = j_count as u64 + 2;
    let alpha = priors.alpha;
    let tau = priors.tau;
    let rho = priors.rho;

    let mut dump = match &cfg.particle_dump {
        Some(path) => {
            let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
            w.write_all(b"NTPD")?;
            w.write_all(&1u32.to_le_bytes())?;
            w.write_all(&(t_len as u32).to_le_bytes())?;
            w.write_all(&(n as u32).to_le_bytes())?;
            w.write_all(&(j_count as u32).to_le_bytes())?;
            Some(w)
        }
        None => None,
    };

    // Diffuse initial intensities around a feasible split of the first
    // observation (or the caller-provided center).
    let y_scale = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let lambda_floor = (1e-6 * y_scale).max(1e-9);
    let base0 = match &cfg.lambda0 {
        Some(l0) => {
            if l0.len() != n {
                return Err(MultilevelError::ShapeMismatch { what: "lambda0 length != routes" });
            }
            l0.map(|v| v.max(lambda_floor))
        }
        None => {
            let p0 = Polytope::new(routing.clone(), y.row(0).transpose())?;
            let mut rng0 = stream_rng(cfg.seed, 0, 0, 0, slots);
            feasible_point(&p0, &mut rng0)?.map(|v| v.max(lambda_floor))
        }
    };
    let mut prev_lambda: Vec<DVector<f64>> = (0..j_count)
        .map(|j| {
            let mut rng = stream_rng(cfg.seed, 63, 0, 1 + j, slots);
            base0.map(|v| {
                (v.ln() + cfg.lambda0_spread * rng.sample::<f64, _>(StandardNormal))
                    .clamp(-LOG_LAMBDA_CLAMP, LOG_LAMBDA_CLAMP)
                    .exp()
            })
        })
        .collect();

    let mut mean = DMatrix::zeros(t_len, n);
    let mut median = DMatrix::zeros(t_len, n);
    let mut q05 = DMatrix::zeros(t_len, n);
    let mut q95 = DMatrix::zeros(t_len, n);
    let mut ess_series = DVector::zeros(t_len);
    let mut diag = FilterDiagnostics::default();

    for t in 0..t_len {
        let y_t = y.row(t).transpose();
        let polytope = Polytope::new(routing.clone(), y_t)?;
        let mut epoch_rng = stream_rng(cfg.seed, 0, t, 0, slots);
        let forced = {
            let mut mask = vec![false; n];
            for &k in polytope.forced_zero() {
                mask[k] = true;
            }
            mask
        };

        // Shared proposal for the traffic draw.
        let mut mu_star = DVector::zeros(n);
        for lam in &prev_lambda {
            mu_star += lam;
        }
        mu_star *= rho / j_count as f64;
        let beta_t = priors.beta[t];
        let sigma_star = mu_star.map(|m| (beta_t.exp_m1() * m * m).max(1e-300));

        // Start the walks at a feasible point shaped like the proposal
        // mean: low-intensity coordinates of the target are extremely
        // narrow, and a walk started outside them would need impractically
        // many steps to find them.
        let x_base = {
            let seed = mu_star.map(|m| m.max(1e-12));
            match crate::polytope::ipfp(
                &routing,
                polytope.y(),
                &seed,
                &crate::polytope::IpfpOptions::default(),
            ) {
                Ok(report)
                    if report.converged
                        && polytope.is_feasible(&report.x) =>
                {
                    report.x
                }
                _ => feasible_point(&polytope, &mut epoch_rng)?,
            }
        };

        let theta1_t = priors.theta1.row(t).transpose();
        let theta2_t = priors.theta2.row(t).transpose();

        // Sample + weight, retrying with longer walks if every weight dies.
        let mut weights = vec![0.0f64; j_count];
        let mut attempt = 0usize;
        let (sampled, ess_t) = loop {
            let steps = cfg.rda_steps_per_draw << attempt;
            let draw_one = |j: usize| -> Result<Sampled, MultilevelError> {
                let mut rng = stream_rng(cfg.seed, 1 + attempt as u64, t, 1 + j, slots);
                let lam_prev = &prev_lambda[j];
                let lambda = DVector::from_fn(n, |k, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    (theta1_t[k] + lam_prev[k].ln() + theta2_t[k].sqrt() * z)
                        .clamp(-LOG_LAMBDA_CLAMP, LOG_LAMBDA_CLAMP)
                        .exp()
                });
                let phi = Gamma::new(alpha, beta_t / alpha)
                    .map_err(|_| MultilevelError::InvalidConfig("invalid Gamma prior"))?
                    .sample(&mut rng)
                    .max(1e-12);
                let x = sample_truncated_normal_polytope(
                    &polytope, &mu_star, &sigma_star, steps, &x_base, &mut rng,
                )?;
                let mut log_w = model_log_density(&x, &lambda, phi, tau);
                for k in 0..n {
                    if !forced[k] {
                        log_w -= ln_kernel(x[k].max(0.0), mu_star[k], sigma_star[k]);
                    }
                }
                if log_w.is_nan() {
                    log_w = f64::NEG_INFINITY;
                }
                Ok(Sampled { lambda, phi, x, log_weight: log_w })
            };
            let candidate: Vec<Sampled> = if cfg.parallel {
                (0..j_count).into_par_iter().map(draw_one).collect::<Result<_, _>>()?
            } else {
                (0..j_count).map(draw_one).collect::<Result<_, _>>()?
            };

            let max_lw =
                candidate.iter().map(|s| s.log_weight).fold(f64::NEG_INFINITY, f64::max);
            if max_lw.is_finite() {
                for (w, s) in weights.iter_mut().zip(&candidate) {
                    *w = (s.log_weight - max_lw).exp();
                }
                let total: f64 = weights.iter().sum();
                if total > 0.0 && total.is_finite() {
                    let e = ess(&weights);
                    break (candidate, e);
                }
            }
            attempt += 1;
            if attempt > cfg.max_epoch_restarts {
                return Err(MultilevelError::DegenerateEnsemble { epoch: t });
            }
            diag.restarts.push((t, attempt));
        };
        ess_series[t] = ess_t;
        if ess_t < cfg.ess_threshold {
            diag.low_ess_epochs.push(t);
        }

        if let Some(w) = dump.as_mut() {
            for s in &sampled {
                for v in s.lambda.iter() {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(&s.phi.to_le_bytes())?;
                for v in s.x.iter() {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(&s.log_weight.to_le_bytes())?;
            }
        }

        let ancestors = match cfg.resampling {
            Resampling::Systematic => systematic_indices(&weights, &mut epoch_rng),
            Resampling::Multinomial => multinomial_indices(&weights, &mut epoch_rng),
        };

        // Move step: refresh each resampled particle with its ancestor's
        // intensity as the dynamic-prior anchor.
        let move_one = |j: usize| -> (Particle, MoveStats) {
            let anc = ancestors[j];
            let src = &sampled[anc];
            let mut rng = stream_rng(cfg.seed, 32, t, 1 + j, slots);
            let mut lambda = src.lambda.clone();
            let mut phi = src.phi;
            let mut x = src.x.clone();
            let lam_prev = &prev_lambda[anc];
            let mut stats = MoveStats::default();

            for _ in 0..cfg.n_move {
                // Componentwise log random walk on the intensities.
                let spread = phi.exp_m1().max(1e-300);
                for k in 0..n {
                    let sd = 0.5 * theta2_t[k].sqrt();
                    let log_cur = lambda[k].ln();
                    let log_prop = (log_cur + sd * rng.sample::<f64, _>(StandardNormal))
                        .clamp(-LOG_LAMBDA_CLAMP, LOG_LAMBDA_CLAMP);
                    let lam_prop = log_prop.exp();
                    let prior_mean = theta1_t[k] + lam_prev[k].ln();
                    let var_cur = (lambda[k].powf(tau) * spread).max(1e-300);
                    let var_prop = (lam_prop.powf(tau) * spread).max(1e-300);
                    let xk = x[k].max(0.0);
                    let delta = -0.5 * (log_prop - prior_mean).powi(2) / theta2_t[k]
                        + 0.5 * (log_cur - prior_mean).powi(2) / theta2_t[k]
                        + ln_kernel(xk, lam_prop, var_prop)
                        - ln_kernel(xk, lambda[k], var_cur);
                    stats.lambda_trials += 1;
                    if delta >= rng.random::<f64>().max(1e-300).ln() {
                        lambda[k] = lam_prop;
                        stats.lambda_accepts += 1;
                    }
                }

                // Log random walk on the common scale; the Gamma-prior and
                // likelihood terms plus the log-scale Jacobian.
                let log_phi = phi.ln();
                let phi_prop = (log_phi + 0.25 * rng.sample::<f64, _>(StandardNormal))
                    .clamp(-60.0, 8.0)
                    .exp();
                let mut delta = (alpha - 1.0) * (phi_prop.ln() - log_phi)
                    - (phi_prop - phi) * alpha / beta_t
                    + (phi_prop.ln() - log_phi);
                let spread_cur = phi.exp_m1().max(1e-300);
                let spread_prop = phi_prop.exp_m1().max(1e-300);
                for k in 0..n {
                    let base = lambda[k].powf(tau);
                    let xk = x[k].max(0.0);
                    delta += ln_kernel(xk, lambda[k], (base * spread_prop).max(1e-300))
                        - ln_kernel(xk, lambda[k], (base * spread_cur).max(1e-300));
                }
                stats.phi_trials += 1;
                if delta >= rng.random::<f64>().max(1e-300).ln() {
                    phi = phi_prop;
                    stats.phi_accepts += 1;
                }

                // Random-direction step on the traffic itself.
                let spread_now = phi.exp_m1().max(1e-300);
                let var_now =
                    DVector::from_fn(n, |k, _| (lambda[k].powf(tau) * spread_now).max(1e-300));
                let target = model_exponent(&lambda, &var_now);
                if let Ok((x_new, accepted)) = rda_step(&polytope, &x, target, &mut rng) {
                    stats.x_trials += 1;
                    if accepted {
                        stats.x_accepts += 1;
                    }
                    x = x_new;
                }
            }
            (Particle { lambda, phi, x, log_weight: 0.0 }, stats)
        };

        let moved: Vec<(Particle, MoveStats)> = if cfg.parallel {
            (0..j_count).into_par_iter().map(move_one).collect()
        } else {
            (0..j_count).map(move_one).collect()
        };

        let mut stats_total = MoveStats::default();
        for (_, s) in &moved {
            stats_total.merge(s);
        }
        diag.accept_lambda.push(stats_total.lambda_rate());
        diag.accept_phi.push(stats_total.phi_rate());
        diag.accept_x.push(stats_total.x_rate());

        // Posterior functionals from the moved ensemble.
        let mut col = vec![0.0f64; j_count];
        for k in 0..n {
            let mut acc = 0.0;
            for (j, (p, _)) in moved.iter().enumerate() {
                col[j] = p.x[k];
                acc += p.x[k];
            }
            mean[(t, k)] = acc / j_count as f64;
            col.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            median[(t, k)] = col[quantile_index(j_count, 0.5)];
            q05[(t, k)] = col[quantile_index(j_count, 0.05)];
            q95[(t, k)] = col[quantile_index(j_count, 0.95)];
        }

        prev_lambda = moved.into_iter().map(|(p, _)| p.lambda).collect();
    }

    if let Some(mut w) = dump.take() {
        w.flush()?;
    }

    Ok(FilterOutput {
        summary: PosteriorSummary { mean, median, q05, q95, ess: ess_series },
        diagnostics: diag,
    })
}

fn quantile_index(len: usize, q: f64) -> usize {
    (((len - 1) as f64) * q).round() as usize
}

#[derive(Debug, Clone, Copy, Default)]
struct MoveStats {
    lambda_accepts: usize,
    lambda_trials: usize,
    phi_accepts: usize,
    phi_trials: usize,
    x_accepts: usize,
    x_trials: usize,
}

impl MoveStats {
    fn merge(&mut self, other: &MoveStats) {
        self.lambda_accepts += other.lambda_accepts;
        self.lambda_trials += other.lambda_trials;
        self.phi_accepts += other.phi_accepts;
        self.phi_trials += other.phi_trials;
        self.x_accepts += other.x_accepts;
        self.x_trials += other.x_trials;
    }

    fn lambda_rate(&self) -> f64 {
        self.lambda_accepts as f64 / self.lambda_trials.max(1) as f64
    }

    fn phi_rate(&self) -> f64 {
        self.phi_accepts as f64 / self.phi_trials.max(1) as f64
    }

    fn x_rate(&self) -> f64 {
        self.x_accepts as f64 / self.x_trials.max(1) as f64
    }
}
