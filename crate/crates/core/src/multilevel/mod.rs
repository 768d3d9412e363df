//! The dynamic multilevel model and its particle filter.
//!
//! Two latent layers sit above the counters: a heavy-tailed log-AR(1)
//! intensity process `lambda_t`, and traffic `x_t` drawn around it from a
//! truncated normal whose variance scales as `lambda^tau (exp(phi_t) - 1)`
//! with a Gamma-distributed common scale `phi_t`. Observations are exact
//! aggregates `y_t = A x_t`, so inference at each epoch lives on the
//! solution polytope. [`sirm_filter`] runs the sample-importance-resample-
//! move recursion with random-direction proposals on that polytope.
//!
//! The optional particle dump is a little-endian binary stream: magic
//! `NTPD`, u32 version (1), u32 T, u32 n, u32 J, then for each epoch and
//! particle: lambda (n f64), phi (f64), x (n f64), log-weight (f64).

mod filter;
pub mod truncnorm;

pub use filter::{sirm_filter, FilterDiagnostics, FilterOutput};
pub use truncnorm::{truncnorm_draw, truncnorm_logpdf, truncnorm_mean};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

use crate::calibrate::PriorSchedule;
use crate::network::RoutingMatrix;

#[derive(Debug, Error)]
pub enum MultilevelError {
    #[error("shape mismatch: {what}")]
    ShapeMismatch { what: &'static str },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("all particle weights vanished at epoch {epoch}")]
    DegenerateEnsemble { epoch: usize },
    #[error(transparent)]
    Polytope(#[from] crate::polytope::PolytopeError),
    #[error("particle dump: {0}")]
    Dump(#[from] std::io::Error),
}

/// One particle of the SIRM ensemble.
#[derive(Debug, Clone)]
pub struct Particle {
    pub lambda: DVector<f64>,
    pub phi: f64,
    pub x: DVector<f64>,
    pub log_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Metropolis-within-Gibbs sweeps per epoch after resampling.
    pub n_move: usize,
    /// Random-direction steps per proposal draw on the polytope.
    pub rda_steps_per_draw: usize,
    pub resampling: Resampling,
    /// Epochs with effective sample size below this are listed in the
    /// diagnostics (no behavioral effect).
    pub ess_threshold: f64,
    pub seed: u64,
    /// Center of the diffuse initial intensity; derived from a feasible
    /// split of the first observation when absent.
    pub lambda0: Option<DVector<f64>>,
    /// Log-scale spread of the initial intensity draws.
    pub lambda0_spread: f64,
    /// Parallelize the per-particle work across threads.
    pub parallel: bool,
    /// Retries (with doubled walk lengths) before a degenerate epoch is
    /// reported as an error.
    pub max_epoch_restarts: usize,
    /// Write the full ensemble per epoch to this file (format above).
    pub particle_dump: Option<std::path::PathBuf>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            n_move: 10,
            rda_steps_per_draw: 50,
            resampling: Resampling::Systematic,
            ess_threshold: 10.0,
            seed: 0,
            lambda0: None,
            lambda0_spread: 1.0,
            parallel: true,
            max_epoch_restarts: 3,
            particle_dump: None,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), MultilevelError> {
        if self.n_particles < 2 {
            return Err(MultilevelError::InvalidConfig("need at least 2 particles"));
        }
        if self.rda_steps_per_draw == 0 {
            return Err(MultilevelError::InvalidConfig("rda_steps_per_draw must be positive"));
        }
        Ok(())
    }
}

/// Posterior functionals of the traffic process, one row per epoch.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub mean: DMatrix<f64>,
    pub median: DMatrix<f64>,
    pub q05: DMatrix<f64>,
    pub q95: DMatrix<f64>,
    /// Effective sample size of the weighted ensemble, before resampling.
    pub ess: DVector<f64>,
}

/// Effective sample size of a weight vector: (sum w)^2 / sum w^2.
pub fn ess(weights: &[f64]) -> f64 {
    let sum: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    if sq <= 0.0 {
        0.0
    } else {
        sum * sum / sq
    }
}

/// Forward simulation of the multilevel model.
#[derive(Debug, Clone)]
pub struct SimData {
    pub lambda: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

/// Simulate `t_len` epochs: intensities follow the log-AR(1) walk from
/// `lambda0`, the scale is Gamma-distributed per epoch unless pinned by
/// `phi_fixed`, traffic is truncated-normal around the intensity, and the
/// counters are exact aggregates.
pub fn simulate<R: Rng + ?Sized>(
    priors: &PriorSchedule,
    phi_fixed: Option<f64>,
    lambda0: &DVector<f64>,
    t_len: usize,
    a: &RoutingMatrix,
    rng: &mut R,
) -> Result<SimData, MultilevelError> {
    let n = a.n();
    if priors.n() != n {
        return Err(MultilevelError::ShapeMismatch { what: "prior schedule routes != routing columns" });
    }
    if priors.t_len() < t_len {
        return Err(MultilevelError::ShapeMismatch { what: "prior schedule shorter than series" });
    }
    if lambda0.len() != n {
        return Err(MultilevelError::ShapeMismatch { what: "lambda0 length != routes" });
    }
    if lambda0.iter().any(|&v| !(v > 0.0)) {
        return Err(MultilevelError::InvalidConfig("lambda0 must be strictly positive"));
    }

    let mut lambda = DMatrix::zeros(t_len, n);
    let mut x = DMatrix::zeros(t_len, n);
    let mut y = DMatrix::zeros(t_len, a.m());
    let mut log_lam: DVector<f64> = lambda0.map(|v| v.ln());
    for t in 0..t_len {
        for j in 0..n {
            let eps = priors.theta1[(t, j)]
                + priors.theta2[(t, j)].sqrt() * rng.sample::<f64, _>(StandardNormal);
            log_lam[j] = (priors.rho * log_lam[j] + eps).clamp(-300.0, 300.0);
        }
        let phi_t = match phi_fixed {
            Some(p) => p,
            None => {
                let g = Gamma::new(priors.alpha, priors.beta[t] / priors.alpha)
                    .map_err(|_| MultilevelError::InvalidConfig("invalid Gamma prior"))?;
                g.sample(rng)
            }
        }
        .max(1e-12);
        let spread = phi_t.exp_m1();
        let mut x_t = DVector::zeros(n);
        for j in 0..n {
            let lam = log_lam[j].exp();
            lambda[(t, j)] = lam;
            let var = (lam.powf(priors.tau) * spread).max(1e-300);
            x_t[j] = truncnorm_draw(lam, var, rng);
            x[(t, j)] = x_t[j];
        }
        let y_t = a.entries() * &x_t;
        for i in 0..a.m() {
            y[(t, i)] = y_t[i];
        }
    }
    Ok(SimData { lambda, x, y })
}

pub(crate) fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let j = weights.len();
    let total: f64 = weights.iter().sum();
    let step = total / j as f64;
    let start = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(j);
    let mut cum = weights[0];
    let mut idx = 0usize;
    for i in 0..j {
        let u = start + step * i as f64;
        while cum < u && idx + 1 < j {
            idx += 1;
            cum += weights[idx];
        }
        out.push(idx);
    }
    out
}

pub(crate) fn multinomial_indices<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let j = weights.len();
    let total: f64 = weights.iter().sum();
    let mut cum = Vec::with_capacity(j);
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cum.push(acc);
    }
    (0..j)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            match cum.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) => i,
                Err(i) => i.min(j - 1),
            }
        })
        .collect()
}
