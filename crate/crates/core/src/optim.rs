//! Derivative-free minimization: Nelder-Mead with the dimension-adaptive
//! coefficients of Gao & Han, plus a single restart around the incumbent
//! when the first pass stalls. Objectives may return non-finite values for
//! invalid points; those vertices are simply ranked worst.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex's relative function spread drops below this.
    pub ftol_rel: f64,
    /// Initial step per coordinate (absolute, the search space is log-scaled
    /// by callers).
    pub init_step: f64,
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 4000, ftol_rel: 1e-9, init_step: 0.1, restarts: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut evals = 0usize;
    let mut best = OptimResult { x: x0.to_vec(), fx: f64::INFINITY, evals: 0, converged: false };
    let mut start = x0.to_vec();
    let mut step = opts.init_step;
    for round in 0..=opts.restarts {
        let r = run_once(&mut f, &start, step, opts, &mut evals);
        if r.fx < best.fx {
            best = r.clone();
        }
        if r.converged || evals >= opts.max_evals {
            best.converged = best.converged || r.converged;
            break;
        }
        // Restart near the incumbent with a smaller simplex.
        start = best.x.clone();
        step *= 0.25;
        let _ = round;
    }
    best.evals = evals;
    best
}

fn run_once<F>(
    f: &mut F,
    x0: &[f64],
    step: f64,
    opts: &NelderMeadOptions,
    evals: &mut usize,
) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0, "cannot optimize over zero parameters");
    let dimf = n as f64;
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / dimf;
    let gamma = 0.75 - 1.0 / (2.0 * dimf);
    let delta = 1.0 - 1.0 / dimf;

    let rank = |v: f64| if v.is_finite() { v } else { f64::MAX };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut fvals: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    for v in &simplex {
        fvals.push(f(v));
        *evals += 1;
    }

    let mut order: Vec<usize> = (0..=n).collect();
    loop {
        order.sort_by(|&a, &b| rank(fvals[a]).partial_cmp(&rank(fvals[b])).unwrap());
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let fb = fvals[best];
        let fw = rank(fvals[worst]);
        let spread = if fw == f64::MAX { f64::MAX } else { (fw - fb).abs() };
        if fb.is_finite() && spread <= opts.ftol_rel * (fb.abs() + 1e-12) {
            return OptimResult { x: simplex[best].clone(), fx: fb, evals: *evals, converged: true };
        }
        if *evals >= opts.max_evals {
            return OptimResult { x: simplex[best].clone(), fx: fb, evals: *evals, converged: false };
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for &i in order.iter().take(n) {
            for (c, xv) in centroid.iter_mut().zip(&simplex[i]) {
                *c += xv;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dimf;
        }

        let relax = |t: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + t * (centroid[j] - simplex[worst][j])).collect()
        };

        let xr = relax(alpha);
        let fr = f(&xr);
        *evals += 1;

        if rank(fr) < rank(fvals[best]) {
            let xe = relax(alpha * beta);
            let fe = f(&xe);
            *evals += 1;
            if rank(fe) < rank(fr) {
                simplex[worst] = xe;
                fvals[worst] = fe;
            } else {
                simplex[worst] = xr;
                fvals[worst] = fr;
            }
        } else if rank(fr) < rank(fvals[second_worst]) {
            simplex[worst] = xr;
            fvals[worst] = fr;
        } else {
            let (xc, fc) = if rank(fr) < rank(fvals[worst]) {
                let xc = relax(alpha * gamma);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = relax(-gamma);
                let fc = f(&xc);
                (xc, fc)
            };
            *evals += 1;
            if rank(fc) < rank(fvals[worst]).min(rank(fr)) {
                simplex[worst] = xc;
                fvals[worst] = fc;
            } else {
                // Shrink toward the best vertex.
                let best_x = simplex[best].clone();
                for &i in order.iter().skip(1) {
                    for j in 0..n {
                        simplex[i][j] = best_x[j] + delta * (simplex[i][j] - best_x[j]);
                    }
                    fvals[i] = f(&simplex[i]);
                    *evals += 1;
                }
            }
        }
    }
}
