//! Kalman filtering for the centered calibration model.
//!
//! With the state started at its stationary mean, the autoregression can be
//! run on the centered variable `z_t = x_t - lambda / (1 - rho)`:
//!
//! ```text
//! z_t = rho z_{t-1} + e_t,            e_t ~ N(0, phi D),   D = diag(lambda)^tau
//! y_t = A z_t + A lambda/(1-rho) + eps_t,   eps_t ~ N(0, sigma2 I)
//! ```
//!
//! which halves the state dimension relative to the constant-augmented
//! formulation. The marginal log-likelihood accumulates the one-step-ahead
//! prediction-error terms from the filter pass.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{GssmError, SsmParams};

const LN_2PI: f64 = 1.8378770664093453;

pub(crate) struct FilterPass {
    pub loglik: f64,
    pub z_pred: Vec<DVector<f64>>,
    pub p_pred: Vec<DMatrix<f64>>,
    pub z_filt: Vec<DVector<f64>>,
    pub p_filt: Vec<DMatrix<f64>>,
}

pub(crate) struct SmoothedStates {
    /// Smoothed latent traffic on the original (uncentered) scale.
    pub x_smooth: Vec<DVector<f64>>,
    /// Diagonal of the smoothed state covariance.
    pub v_smooth: Vec<DVector<f64>>,
}

/// One-step-ahead marginal log-likelihood of a window, without storing the
/// state trajectory (the optimizer hot path).
pub(crate) fn marginal_loglik(
    params: &SsmParams,
    y: &[DVector<f64>],
    a: &DMatrix<f64>,
) -> Result<f64, GssmError> {
    run_filter(params, y, a, false).map(|p| p.loglik)
}

/// Full filter pass retaining predicted and filtered moments.
pub(crate) fn filter_pass(
    params: &SsmParams,
    y: &[DVector<f64>],
    a: &DMatrix<f64>,
) -> Result<FilterPass, GssmError> {
    run_filter(params, y, a, true)
}

fn run_filter(
    params: &SsmParams,
    y: &[DVector<f64>],
    a: &DMatrix<f64>,
    store: bool,
) -> Result<FilterPass, GssmError> {
    let (m, n) = a.shape();
    let w = y.len();
    if w < 2 {
        return Err(GssmError::WindowTooShort { got: w });
    }
    let rho = params.rho;
    let phi = params.phi;
    let d = params.state_noise_diag();

    // Observation offset from the stationary mean.
    let steady = &params.lambda / (1.0 - rho);
    let offset = a * &steady;

    // Stationary initialization: z_1 ~ N(0, phi/(1-rho^2) D).
    let mut z_pred = DVector::zeros(n);
    let mut p_pred = DMatrix::from_diagonal(&(&d * (phi / (1.0 - rho * rho))));

    let mut pass = FilterPass {
        loglik: 0.0,
        z_pred: Vec::new(),
        p_pred: Vec::new(),
        z_filt: Vec::new(),
        p_filt: Vec::new(),
    };
    if store {
        pass.z_pred.reserve(w);
        pass.p_pred.reserve(w);
        pass.z_filt.reserve(w);
        pass.p_filt.reserve(w);
    }

    let identity = DMatrix::<f64>::identity(n, n);
    for (t, y_t) in y.iter().enumerate() {
        if y_t.len() != m {
            return Err(GssmError::LengthMismatch { expected: m, got: y_t.len() });
        }
        let ap = a * &p_pred; // m x n
        let mut s = &ap * a.transpose();
        for i in 0..m {
            s[(i, i)] += params.sigma2;
        }
        let chol = Cholesky::new(s).ok_or(GssmError::NonFiniteLikelihood { t })?;
        let innov = y_t - &offset - a * &z_pred;
        let solved = chol.solve(&innov);
        let quad = innov.dot(&solved);
        let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let term = -0.5 * (m as f64 * LN_2PI + ln_det + quad);
        if !term.is_finite() {
            return Err(GssmError::NonFiniteLikelihood { t });
        }
        pass.loglik += term;

        // K = P A' S^-1 via S X = A P.
        let k = chol.solve(&ap).transpose(); // n x m
        let z_filt = &z_pred + &k * &innov;
        // Joseph-form covariance update.
        let ika = &identity - &k * a;
        let mut p_filt = &ika * &p_pred * ika.transpose();
        p_filt += &k * k.transpose() * params.sigma2;

        if store {
            pass.z_pred.push(z_pred.clone());
            pass.p_pred.push(p_pred.clone());
            pass.z_filt.push(z_filt.clone());
            pass.p_filt.push(p_filt.clone());
        }

        z_pred = &z_filt * rho;
        p_pred = &p_filt * (rho * rho);
        for i in 0..n {
            p_pred[(i, i)] += phi * d[i];
        }
    }
    Ok(pass)
}

/// Rauch-Tung-Striebel smoother on a stored filter pass, mapped back to the
/// uncentered traffic scale.
pub(crate) fn smooth(
    params: &SsmParams,
    pass: &FilterPass,
) -> Result<SmoothedStates, GssmError> {
    let w = pass.z_filt.len();
    let n = pass.z_filt[0].len();
    let rho = params.rho;
    let steady = &params.lambda / (1.0 - rho);

    let mut z_s = vec![DVector::zeros(n); w];
    let mut p_s = vec![DMatrix::zeros(n, n); w];
    z_s[w - 1] = pass.z_filt[w - 1].clone();
    p_s[w - 1] = pass.p_filt[w - 1].clone();
    for t in (0..w - 1).rev() {
        let chol = Cholesky::new(pass.p_pred[t + 1].clone())
            .ok_or(GssmError::NonFiniteLikelihood { t: t + 1 })?;
        // J = rho P_filt P_pred^{-1}; solve on the transpose since the
        // matrices are symmetric.
        let j = chol.solve(&(pass.p_filt[t].transpose() * rho)).transpose();
        z_s[t] = &pass.z_filt[t] + &j * (&z_s[t + 1] - &pass.z_pred[t + 1]);
        let dp = &p_s[t + 1] - &pass.p_pred[t + 1];
        p_s[t] = &pass.p_filt[t] + &j * dp * j.transpose();
    }

    let mut x_smooth = Vec::with_capacity(w);
    let mut v_smooth = Vec::with_capacity(w);
    for t in 0..w {
        x_smooth.push(&z_s[t] + &steady);
        v_smooth.push(DVector::from_fn(n, |i, _| p_s[t][(i, i)].max(1e-12)));
    }
    Ok(SmoothedStates { x_smooth, v_smooth })
}
