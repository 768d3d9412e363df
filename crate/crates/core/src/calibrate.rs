//! Prior schedules for the multilevel model.
//!
//! Stage-1 estimates (state-space fit or gravity) become the per-route,
//! per-epoch constants of the intensity random walk: `theta1` centers the
//! log-intensity increment, `theta2` sets its variance, and `beta_t` is the
//! mean of the Gamma prior on the common scale. The naive schedule skips
//! stage 1 entirely and uses the fixed random-walk constants.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::network::RoutingMatrix;
use crate::polytope::{ipfp, IpfpOptions};

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("matrix shape ({rows}, {cols}) does not match expected ({exp_rows}, {exp_cols})")]
    ShapeMismatch { rows: usize, cols: usize, exp_rows: usize, exp_cols: usize },
    #[error("median window must be odd and >= 1, got {got}")]
    BadMedianWindow { got: usize },
    #[error("stage-1 estimates must be strictly positive at ({t}, {route})")]
    NonPositiveEstimate { t: usize, route: usize },
    #[error("series must contain at least one epoch")]
    Empty,
    #[error(transparent)]
    Polytope(#[from] crate::polytope::PolytopeError),
}

/// Constants of the multilevel model's top layer, per epoch and route.
#[derive(Debug, Clone)]
pub struct PriorSchedule {
    /// Mean of the log-intensity increment (T x n).
    pub theta1: DMatrix<f64>,
    /// Variance of the log-intensity increment (T x n, positive).
    pub theta2: DMatrix<f64>,
    /// Mean of the Gamma prior on the scale, per epoch (positive).
    pub beta: DVector<f64>,
    /// Gamma shape (regularization weight).
    pub alpha: f64,
    /// Intensity autocorrelation.
    pub rho: f64,
    /// Power tying error variance to intensity.
    pub tau: f64,
}

impl PriorSchedule {
    pub fn t_len(&self) -> usize {
        self.theta1.nrows()
    }

    pub fn n(&self) -> usize {
        self.theta1.ncols()
    }

    pub fn validate(&self) -> Result<(), CalibrateError> {
        if self.t_len() == 0 || self.n() == 0 {
            return Err(CalibrateError::Empty);
        }
        if self.theta2.shape() != self.theta1.shape() {
            let (rows, cols) = self.theta2.shape();
            return Err(CalibrateError::ShapeMismatch {
                rows,
                cols,
                exp_rows: self.t_len(),
                exp_cols: self.n(),
            });
        }
        debug_assert!(self.theta2.iter().all(|&v| v > 0.0));
        debug_assert!(self.beta.iter().all(|&v| v > 0.0));
        debug_assert!(self.alpha > 0.0);
        Ok(())
    }

    /// Same schedule with a different autocorrelation constant.
    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }
}

/// Fixed random-walk schedule: zero drift, increment variance log(5)/2,
/// beta 1.5, alpha n/2.
pub fn naive_priors(n: usize, t_len: usize) -> PriorSchedule {
    let theta2 = 2.0 * 5.0_f64.ln() / 4.0;
    PriorSchedule {
        theta1: DMatrix::zeros(t_len, n),
        theta2: DMatrix::from_element(t_len, n, theta2),
        beta: DVector::from_element(t_len, 1.5),
        alpha: n as f64 / 2.0,
        rho: 0.9,
        tau: 2.0,
    }
}

/// Corrected stage-1 estimates plus the epochs where the margin correction
/// failed to converge (those were interpolated from neighbors).
#[derive(Debug, Clone)]
pub struct CorrectedEstimates {
    pub x: DMatrix<f64>,
    pub flagged_epochs: Vec<usize>,
}

/// Make stage-1 estimates usable as calibration input: IPFP-correct each
/// epoch onto its observed margins, then apply a per-route running median
/// over time to knock out isolated outliers. Output is strictly positive.
pub fn correct_and_smooth(
    x_raw: &DMatrix<f64>,
    a: &RoutingMatrix,
    y: &DMatrix<f64>,
    median_window: usize,
) -> Result<CorrectedEstimates, CalibrateError> {
    let t_len = x_raw.nrows();
    let n = x_raw.ncols();
    if t_len == 0 {
        return Err(CalibrateError::Empty);
    }
    if n != a.n() || y.nrows() != t_len || y.ncols() != a.m() {
        return Err(CalibrateError::ShapeMismatch {
            rows: y.nrows(),
            cols: y.ncols(),
            exp_rows: t_len,
            exp_cols: a.m(),
        });
    }
    if median_window % 2 == 0 || median_window == 0 {
        return Err(CalibrateError::BadMedianWindow { got: median_window });
    }

    let y_mean = y.iter().sum::<f64>() / (y.len() as f64);
    let floor = (1e-6 * y_mean).max(1e-12);

    let mut corrected = DMatrix::zeros(t_len, n);
    let mut flagged = Vec::new();
    let opts = IpfpOptions { max_iter: 500, tol: 1e-9, shuffle_seed: None };
    for t in 0..t_len {
        let y_t = y.row(t).transpose();
        let seed = DVector::from_fn(n, |j, _| x_raw[(t, j)].max(floor));
        let report = ipfp(a, &y_t, &seed, &opts)?;
        if !report.converged {
            flagged.push(t);
        }
        for j in 0..n {
            corrected[(t, j)] = report.x[j];
        }
    }

    // Replace flagged epochs by interpolating their neighbors (in log space,
    // respecting positivity) before the median pass.
    if !flagged.is_empty() {
        let good: Vec<usize> = (0..t_len).filter(|t| !flagged.contains(t)).collect();
        if !good.is_empty() {
            for &t in &flagged {
                let prev = good.iter().rev().find(|&&g| g < t);
                let next = good.iter().find(|&&g| g > t);
                for j in 0..n {
                    let v = match (prev, next) {
                        (Some(&p), Some(&q)) => {
                            let frac = (t - p) as f64 / (q - p) as f64;
                            (corrected[(p, j)].max(floor).ln() * (1.0 - frac)
                                + corrected[(q, j)].max(floor).ln() * frac)
                                .exp()
                        }
                        (Some(&p), None) => corrected[(p, j)],
                        (None, Some(&q)) => corrected[(q, j)],
                        (None, None) => unreachable!("good is nonempty"),
                    };
                    corrected[(t, j)] = v;
                }
            }
        }
    }

    let half = median_window / 2;
    let mut out = DMatrix::zeros(t_len, n);
    let mut buf = Vec::with_capacity(median_window);
    for j in 0..n {
        for t in 0..t_len {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(t_len);
            buf.clear();
            buf.extend((lo..hi).map(|s| corrected[(s, j)]));
            buf.sort_by(|x, y| x.partial_cmp(y).unwrap());
            out[(t, j)] = buf[buf.len() / 2].max(floor);
        }
    }
    Ok(CorrectedEstimates { x: out, flagged_epochs: flagged })
}

/// Variance of each route's estimate path over a centered window (the
/// nearest complete window at the edges). This is the estimate-variability
/// reading of V-hat: it measures how much the stage-1 estimates move
/// locally, which is what the intensity-increment prior needs to know.
pub fn windowed_variance(x: &DMatrix<f64>, window: usize) -> DMatrix<f64> {
    let t_len = x.nrows();
    let n = x.ncols();
    let w = window.clamp(2, t_len);
    let half = (w - 1) / 2;
    let mut out = DMatrix::zeros(t_len, n);
    for j in 0..n {
        for t in 0..t_len {
            let lo = t.saturating_sub(half).min(t_len - w);
            let hi = lo + w;
            let mut mean = 0.0;
            for s in lo..hi {
                mean += x[(s, j)];
            }
            mean /= w as f64;
            let mut var = 0.0;
            for s in lo..hi {
                var += (x[(s, j)] - mean).powi(2);
            }
            var /= (w - 1) as f64;
            out[(t, j)] = var.max(1e-12);
        }
    }
    out
}

/// Squared standard error of a windowed estimate path: the local variance
/// scaled down by the window length, as for a window-mean estimator. This
/// is the reading of "variance of the final estimates" that treats them as
/// averaged quantities rather than single draws.
pub fn estimate_variance(x: &DMatrix<f64>, window: usize) -> DMatrix<f64> {
    let w = window.max(2) as f64;
    windowed_variance(x, window).map(|v| v / w)
}

/// Priors from state-space estimates: increments of log x-hat center the
/// intensity walk, the relative variance of the estimates sets its spread,
/// and the fitted scale parameterizes the Gamma prior.
pub fn priors_from_ssm(
    x_hat: &DMatrix<f64>,
    v_hat: &DMatrix<f64>,
    phi_hat: &DVector<f64>,
    rho: f64,
) -> Result<PriorSchedule, CalibrateError> {
    let t_len = x_hat.nrows();
    let n = x_hat.ncols();
    if t_len == 0 || n == 0 {
        return Err(CalibrateError::Empty);
    }
    if v_hat.shape() != (t_len, n) {
        let (rows, cols) = v_hat.shape();
        return Err(CalibrateError::ShapeMismatch { rows, cols, exp_rows: t_len, exp_cols: n });
    }
    if phi_hat.len() != t_len {
        return Err(CalibrateError::ShapeMismatch {
            rows: phi_hat.len(),
            cols: 1,
            exp_rows: t_len,
            exp_cols: 1,
        });
    }
    for t in 0..t_len {
        for j in 0..n {
            if !(x_hat[(t, j)] > 0.0) {
                return Err(CalibrateError::NonPositiveEstimate { t, route: j });
            }
            if !(v_hat[(t, j)] > 0.0) {
                return Err(CalibrateError::NonPositiveEstimate { t, route: j });
            }
        }
    }

    let mut theta1 = DMatrix::zeros(t_len, n);
    let mut theta2 = DMatrix::zeros(t_len, n);
    for j in 0..n {
        // Stationary-mean convention at the boundary: the implied prior mean
        // of log lambda_1 is log x_hat_1.
        theta1[(0, j)] = (1.0 - rho) * x_hat[(0, j)].ln();
        for t in 1..t_len {
            theta1[(t, j)] = x_hat[(t, j)].ln() - rho * x_hat[(t - 1, j)].ln();
        }
        for t in 0..t_len {
            let rel = v_hat[(t, j)] / (x_hat[(t, j)] * x_hat[(t, j)]);
            theta2[(t, j)] = ((1.0 - rho * rho) * (1.0 + rel).ln()).max(1e-10);
        }
    }
    let beta = DVector::from_fn(t_len, |t, _| (1.0 + phi_hat[t].max(0.0)).ln().max(1e-10));
    Ok(PriorSchedule { theta1, theta2, beta, alpha: n as f64 / 2.0, rho, tau: 2.0 })
}

/// Priors from gravity estimates: same increment formula for `theta1`;
/// `theta2` is the per-route variance of those increments (constant over
/// time, floored at 1e-4); `beta` falls back to the fixed constant 1.5.
pub fn priors_from_gravity(x_grav: &DMatrix<f64>, rho: f64) -> Result<PriorSchedule, CalibrateError> {
    let t_len = x_grav.nrows();
    let n = x_grav.ncols();
    if t_len == 0 || n == 0 {
        return Err(CalibrateError::Empty);
    }
    let scale = x_grav.iter().cloned().fold(0.0, f64::max);
    let floor = (1e-9 * scale).max(1e-12);
    let logx = |t: usize, j: usize| x_grav[(t, j)].max(floor).ln();

    let mut theta1 = DMatrix::zeros(t_len, n);
    let mut theta2 = DMatrix::zeros(t_len, n);
    for j in 0..n {
        theta1[(0, j)] = (1.0 - rho) * logx(0, j);
        for t in 1..t_len {
            theta1[(t, j)] = logx(t, j) - rho * logx(t - 1, j);
        }
        let mean = (0..t_len).map(|t| theta1[(t, j)]).sum::<f64>() / t_len as f64;
        let var = if t_len > 1 {
            (0..t_len).map(|t| (theta1[(t, j)] - mean).powi(2)).sum::<f64>() / (t_len - 1) as f64
        } else {
            0.0
        };
        let v = var.max(1e-4);
        for t in 0..t_len {
            theta2[(t, j)] = v;
        }
    }
    Ok(PriorSchedule {
        theta1,
        theta2,
        beta: DVector::from_element(t_len, 1.5),
        alpha: n as f64 / 2.0,
        rho,
        tau: 2.0,
    })
}
