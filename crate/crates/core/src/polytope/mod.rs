//! The feasible region {x >= 0 : A x = y} and samplers restricted to it.
//!
//! Points are parameterized by the free block `x2` (the non-pivot columns of
//! the decomposed routing matrix); the dependent block is always derived as
//! `x1 = A1^-1 y - C x2`, so every point this module hands out satisfies the
//! equality constraints by construction. Counters that read zero pin every
//! route they cover to zero and are eliminated up front, shrinking the
//! polytope.

mod simplex;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::network::{NetworkError, RoutingMatrix};

use simplex::{phase_one, PhaseOne};

/// Chord shorter than this counts as pinned; the direction is resampled.
const PINNED_TOL: f64 = 1e-14;

/// Attempts to find an unpinned direction before giving up on a step.
const MAX_DIRECTION_RESAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum PolytopeError {
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("counter {index} is negative ({value})")]
    NegativeCounter { index: usize, value: f64 },
    #[error("seed must be strictly positive (component {index})")]
    InvalidSeed { index: usize },
    #[error("covariance diagonal must be strictly positive (component {index})")]
    InvalidCovariance { index: usize },
    #[error("no nonnegative solution: phase-one residual {residual:.3e}")]
    Infeasible { residual: f64 },
    #[error("starting point violates the constraints (residual {residual:.3e})")]
    InfeasibleStart { residual: f64 },
    #[error("simplex failed: {0}")]
    Simplex(&'static str),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Feasible step interval along a direction; the current point corresponds
/// to 0, so `l <= 0 <= h` always.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChordBounds {
    pub l: f64,
    pub h: f64,
}

/// The solution polytope of one epoch's observation.
#[derive(Debug, Clone)]
pub struct Polytope {
    full_routing: Arc<RoutingMatrix>,
    y_full: DVector<f64>,
    /// Routing restricted to the free (not forced-zero) columns; `None` when
    /// every route is pinned at zero.
    reduced: Option<Arc<RoutingMatrix>>,
    /// Reduced column index -> original column index.
    free_cols: Vec<usize>,
    /// Original column indices pinned at zero by zero counters.
    forced_zero: Vec<usize>,
    /// Independent counter values of the reduced system, in basis order.
    y_red: DVector<f64>,
}

impl Polytope {
    pub fn new(routing: Arc<RoutingMatrix>, y: DVector<f64>) -> Result<Self, PolytopeError> {
        let m = routing.m();
        let n = routing.n();
        if y.len() != m {
            return Err(PolytopeError::LengthMismatch { expected: m, got: y.len() });
        }
        let mut y_full = y;
        for i in 0..m {
            if y_full[i] < 0.0 {
                if y_full[i] > -1e-12 * (1.0 + y_full.amax()) {
                    y_full[i] = 0.0;
                } else {
                    return Err(PolytopeError::NegativeCounter { index: i, value: y_full[i] });
                }
            }
        }

        let mut forced = vec![false; n];
        for i in 0..m {
            if y_full[i] == 0.0 {
                for j in 0..n {
                    if routing.entries()[(i, j)] > 0.0 {
                        forced[j] = true;
                    }
                }
            }
        }
        let forced_zero: Vec<usize> = (0..n).filter(|&j| forced[j]).collect();
        let free_cols: Vec<usize> = (0..n).filter(|&j| !forced[j]).collect();

        let reduced = if forced_zero.is_empty() {
            Some(routing.clone())
        } else if free_cols.is_empty() {
            None
        } else {
            let entries = DMatrix::from_fn(m, free_cols.len(), |i, j| {
                routing.entries()[(i, free_cols[j])]
            });
            let row_names = routing.row_names().to_vec();
            let col_names = free_cols.iter().map(|&j| routing.col_names()[j].clone()).collect();
            Some(Arc::new(RoutingMatrix::with_names(entries, row_names, col_names)?))
        };

        let y_red = match &reduced {
            Some(r) => r.reduce_y(&y_full)?,
            None => DVector::zeros(0),
        };

        Ok(Self { full_routing: routing, y_full, reduced, free_cols, forced_zero, y_red })
    }

    /// Total number of routes (length of points produced here).
    pub fn n(&self) -> usize {
        self.full_routing.n()
    }

    /// Dimension of the polytope: free routes minus independent constraints.
    pub fn dim(&self) -> usize {
        match &self.reduced {
            Some(r) => r.polytope_dim(),
            None => 0,
        }
    }

    pub fn routing(&self) -> &Arc<RoutingMatrix> {
        &self.full_routing
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y_full
    }

    /// Independent counter values of the (possibly reduced) system.
    pub fn y_reduced(&self) -> &DVector<f64> {
        &self.y_red
    }

    /// Routes pinned at zero by zero counters.
    pub fn forced_zero(&self) -> &[usize] {
        &self.forced_zero
    }

    /// Max-norm residual of the full constraint system at `x`.
    pub fn residual_inf(&self, x: &DVector<f64>) -> f64 {
        let r = self.full_routing.entries() * x - &self.y_full;
        r.amax()
    }

    /// Feasibility at the module tolerance: x >= -1e-12 componentwise and
    /// ||A x - y||_inf <= 1e-8 (1 + ||y||_inf).
    pub fn is_feasible(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|&v| v >= -1e-12)
            && self.residual_inf(x) <= 1e-8 * (1.0 + self.y_full.amax())
    }

    /// Extract the free block `x2` of a full point.
    fn extract_x2(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.reduced {
            Some(r) => {
                let rank = r.rank();
                let dim = r.polytope_dim();
                DVector::from_fn(dim, |k, _| x[self.free_cols[r.col_perm()[rank + k]]])
            }
            None => DVector::zeros(0),
        }
    }

    /// Dependent block from the free block: `x1 = A1^-1 y - C x2`.
    fn derive_x1(&self, x2: &DVector<f64>) -> DVector<f64> {
        match &self.reduced {
            Some(r) => {
                if r.polytope_dim() == 0 {
                    r.a1_inv() * &self.y_red
                } else {
                    r.a1_inv() * &self.y_red - r.c() * x2
                }
            }
            None => DVector::zeros(0),
        }
    }

    /// Assemble a full n-vector (original column order) from the blocks.
    fn assemble(&self, x1: &DVector<f64>, x2: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.n());
        if let Some(r) = &self.reduced {
            let rank = r.rank();
            for (i, v) in x1.iter().enumerate() {
                x[self.free_cols[r.col_perm()[i]]] = *v;
            }
            for (k, v) in x2.iter().enumerate() {
                x[self.free_cols[r.col_perm()[rank + k]]] = *v;
            }
        }
        x
    }

    /// The unique point when `dim() == 0`, if it is nonnegative.
    fn unique_point(&self) -> Result<DVector<f64>, PolytopeError> {
        let x2 = DVector::zeros(0);
        let x1 = self.derive_x1(&x2);
        let mut x = self.assemble(&x1, &x2);
        for v in x.iter_mut() {
            if *v < 0.0 && *v > -1e-9 * (1.0 + self.y_full.amax()) {
                *v = 0.0;
            }
        }
        let resid = self.residual_inf(&x);
        if x.iter().all(|&v| v >= 0.0) && resid <= 1e-8 * (1.0 + self.y_full.amax()) {
            Ok(x)
        } else {
            Err(PolytopeError::Infeasible { residual: resid.max(-x.min()) })
        }
    }
}

/// Feasible chord [l, h] along direction `d` in the free block, with
/// `w = C d` precomputed. Ties where a coefficient is exactly zero
/// contribute no bound; the outer guards keep 0 inside the interval.
fn chord_bounds(x1: &DVector<f64>, x2: &DVector<f64>, d: &DVector<f64>, w: &DVector<f64>) -> ChordBounds {
    let mut h = f64::INFINITY;
    let mut l = f64::NEG_INFINITY;
    for k in 0..w.len() {
        let wk = w[k];
        if wk > 0.0 {
            h = h.min(x1[k] / wk);
        } else if wk < 0.0 {
            l = l.max(x1[k] / wk);
        }
    }
    for k in 0..d.len() {
        let dk = d[k];
        if dk < 0.0 {
            h = h.min(-x2[k] / dk);
        } else if dk > 0.0 {
            l = l.max(-x2[k] / dk);
        }
    }
    ChordBounds { l: l.min(0.0), h: h.max(0.0) }
}

/// Internal chain state: blocks plus the cached log density of the point.
struct ChainState {
    x1: DVector<f64>,
    x2: DVector<f64>,
    log_f: f64,
}

impl ChainState {
    fn init<F>(p: &Polytope, x: &DVector<f64>, log_density: &F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64,
    {
        let x2 = p.extract_x2(x);
        let x1 = p.derive_x1(&x2);
        let full = p.assemble(&x1, &x2);
        let log_f = log_density(&full);
        ChainState { x1, x2, log_f }
    }
}

/// One Metropolis step of the random-directions walk: draw a unit direction
/// in the free block, intersect with the polytope, propose uniformly along
/// the chord, and accept with the usual ratio. Returns true on acceptance.
fn rda_step_state<F, R>(p: &Polytope, state: &mut ChainState, log_density: &F, rng: &mut R) -> bool
where
    F: Fn(&DVector<f64>) -> f64,
    R: Rng + ?Sized,
{
    let dim = p.dim();
    if dim == 0 {
        return true;
    }
    let reduced = p.reduced.as_ref().expect("dim > 0 implies a reduced system");

    for _ in 0..MAX_DIRECTION_RESAMPLES {
        let mut d = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = d.norm();
        if norm == 0.0 {
            continue;
        }
        d /= norm;
        let w = reduced.c() * &d;
        let bounds = chord_bounds(&state.x1, &state.x2, &d, &w);
        if bounds.h - bounds.l < PINNED_TOL {
            continue;
        }
        let u = rng.random_range(bounds.l..bounds.h);
        let x2_prop = &state.x2 + &d * u;
        let x1_prop = &state.x1 - &w * u;
        let full_prop = p.assemble(&x1_prop, &x2_prop);
        let log_f_prop = log_density(&full_prop);
        let accept = log_f_prop - state.log_f >= rng.random::<f64>().max(1e-300).ln();
        if accept {
            state.x1 = x1_prop;
            state.x2 = x2_prop;
            state.log_f = log_f_prop;
            return true;
        }
        return false;
    }
    // Pinned along every sampled direction: keep the point.
    false
}

/// Single random-directions Metropolis step from `x` against `log_density`.
/// The equality constraints are maintained by reconstructing the dependent
/// block, so `x` only needs to be feasible up to roundoff.
pub fn rda_step<F, R>(
    p: &Polytope,
    x: &DVector<f64>,
    log_density: F,
    rng: &mut R,
) -> Result<(DVector<f64>, bool), PolytopeError>
where
    F: Fn(&DVector<f64>) -> f64,
    R: Rng + ?Sized,
{
    if x.len() != p.n() {
        return Err(PolytopeError::LengthMismatch { expected: p.n(), got: x.len() });
    }
    if p.dim() == 0 {
        return Ok((x.clone(), true));
    }
    let mut state = ChainState::init(p, x, &log_density);
    let accepted = rda_step_state(p, &mut state, &log_density, rng);
    Ok((p.assemble(&state.x1, &state.x2), accepted))
}

/// Run the random-directions walk for `steps` iterations against the
/// diagonal Gaussian with the given mean and covariance diagonal (the
/// truncation to the polytope is implicit: proposals never leave it).
pub fn sample_truncated_normal_polytope<R>(
    p: &Polytope,
    mean: &DVector<f64>,
    cov_diag: &DVector<f64>,
    steps: usize,
    init: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>, PolytopeError>
where
    R: Rng + ?Sized,
{
    let n = p.n();
    if mean.len() != n {
        return Err(PolytopeError::LengthMismatch { expected: n, got: mean.len() });
    }
    if cov_diag.len() != n {
        return Err(PolytopeError::LengthMismatch { expected: n, got: cov_diag.len() });
    }
    if init.len() != n {
        return Err(PolytopeError::LengthMismatch { expected: n, got: init.len() });
    }
    if let Some(idx) = (0..n).find(|&j| cov_diag[j] <= 0.0) {
        return Err(PolytopeError::InvalidCovariance { index: idx });
    }
    let resid = p.residual_inf(init);
    if resid > 1e-6 * (1.0 + p.y().amax()) {
        return Err(PolytopeError::InfeasibleStart { residual: resid });
    }
    if steps == 0 {
        return Ok(init.clone());
    }
    if p.dim() == 0 {
        return Ok(p.unique_point().unwrap_or_else(|_| init.clone()));
    }
    let log_density = |x: &DVector<f64>| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            let d = x[j] - mean[j];
            s -= 0.5 * d * d / cov_diag[j];
        }
        s
    };
    let mut state = ChainState::init(p, init, &log_density);
    for _ in 0..steps {
        rda_step_state(p, &mut state, &log_density, rng);
    }
    Ok(p.assemble(&state.x1, &state.x2))
}

/// Convergence report of an IPFP run. `x` is always usable; `converged`
/// tells whether the violation dropped below the requested tolerance.
#[derive(Debug, Clone)]
pub struct IpfpReport {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub max_rel_violation: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct IpfpOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Seeded constraint-order shuffle for robustness studies; sweeps are
    /// ascending by counter index when `None`.
    pub shuffle_seed: Option<u64>,
}

impl Default for IpfpOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-8, shuffle_seed: None }
    }
}

/// Iterative proportional fitting: cyclically rescale `x` on each counter's
/// support by the ratio of the target to the current aggregate. Zero
/// counters pin their covered routes to zero first.
pub fn ipfp(
    a: &RoutingMatrix,
    y: &DVector<f64>,
    seed: &DVector<f64>,
    opts: &IpfpOptions,
) -> Result<IpfpReport, PolytopeError> {
    let (m, n) = (a.m(), a.n());
    if y.len() != m {
        return Err(PolytopeError::LengthMismatch { expected: m, got: y.len() });
    }
    if seed.len() != n {
        return Err(PolytopeError::LengthMismatch { expected: n, got: seed.len() });
    }
    for i in 0..m {
        if y[i] < 0.0 {
            return Err(PolytopeError::NegativeCounter { index: i, value: y[i] });
        }
    }
    if let Some(idx) = (0..n).find(|&j| seed[j] <= 0.0) {
        return Err(PolytopeError::InvalidSeed { index: idx });
    }

    let entries = a.entries();
    let supports: Vec<Vec<usize>> = (0..m)
        .map(|i| (0..n).filter(|&j| entries[(i, j)] > 0.0).collect())
        .collect();

    let mut x = seed.clone();
    for i in 0..m {
        if y[i] == 0.0 {
            for &j in &supports[i] {
                x[j] = 0.0;
            }
        }
    }

    let mut order: Vec<usize> = (0..m).filter(|&i| y[i] > 0.0).collect();
    if let Some(s) = opts.shuffle_seed {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
        order.shuffle(&mut rng);
    }

    let violation = |x: &DVector<f64>| -> f64 {
        let ax = entries * x;
        let scale = 1.0 + y.amax();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            let v = if y[i] > 0.0 {
                (ax[i] - y[i]).abs() / y[i]
            } else {
                ax[i].abs() / scale
            };
            worst = worst.max(v);
        }
        worst
    };

    let mut max_rel_violation = violation(&x);
    let mut iterations = 0;
    while max_rel_violation >= opts.tol && iterations < opts.max_iter {
        for &i in &order {
            let mut ax_i = 0.0;
            for &j in &supports[i] {
                ax_i += entries[(i, j)] * x[j];
            }
            if ax_i > 0.0 {
                let factor = y[i] / ax_i;
                for &j in &supports[i] {
                    x[j] *= factor;
                }
            }
        }
        iterations += 1;
        max_rel_violation = violation(&x);
    }

    Ok(IpfpReport { x, iterations, max_rel_violation, converged: max_rel_violation < opts.tol })
}

/// A strictly feasible point of the polytope: IPFP from a uniform positive
/// seed (interior when it converges), with a phase-one simplex fallback that
/// certifies infeasibility when no nonnegative solution exists.
pub fn feasible_point<R>(p: &Polytope, rng: &mut R) -> Result<DVector<f64>, PolytopeError>
where
    R: Rng + ?Sized,
{
    let tol = 1e-8 * (1.0 + p.y().amax());

    if p.y().iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(p.n()));
    }
    if p.dim() == 0 {
        return p.unique_point();
    }
    let reduced = p.reduced.as_ref().expect("dim > 0 implies a reduced system");

    // Seed at the average per-route volume implied by the totals.
    let total_y: f64 = p.y().iter().sum();
    let total_a: f64 = p.full_routing.entries().iter().sum();
    let scale = (total_y / total_a.max(1e-300)).max(1e-12);
    let seed = DVector::from_element(p.n(), scale);
    let report = ipfp(&p.full_routing, p.y(), &seed, &IpfpOptions::default())?;
    if report.converged && p.residual_inf(&report.x) <= tol {
        return Ok(report.x);
    }

    // IPFP stalled: decide feasibility exactly on the independent rows.
    let a_ind = reduced.independent_rows();
    match phase_one(&a_ind, &p.y_red).map_err(PolytopeError::Simplex)? {
        PhaseOne::Infeasible { residual } => Err(PolytopeError::Infeasible { residual }),
        PhaseOne::Feasible(x_free) => {
            let mut x = DVector::zeros(p.n());
            for (k, &col) in p.free_cols.iter().enumerate() {
                x[col] = x_free[k];
            }
            let resid = p.residual_inf(&x);
            if resid > tol {
                // Independent rows are satisfiable but a redundant counter
                // disagrees: y is not in the range of A.
                return Err(PolytopeError::Infeasible { residual: resid });
            }
            // Vertex solutions sit on the boundary; a short constant-density
            // walk moves the point into the interior.
            let mut state = ChainState::init(p, &x, &|_: &DVector<f64>| 0.0);
            for _ in 0..(4 * p.dim() + 8) {
                rda_step_state(p, &mut state, &|_: &DVector<f64>| 0.0, rng);
            }
            Ok(p.assemble(&state.x1, &state.x2))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{aggregate, build_star, RoutingMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simplex_polytope(k: usize) -> Polytope {
        // {x >= 0 : sum x_i = 1}, the standard (k-1)-simplex.
        let a = RoutingMatrix::from_entries(DMatrix::from_element(1, k, 1.0)).unwrap();
        Polytope::new(Arc::new(a), DVector::from_element(1, 1.0)).unwrap()
    }

    #[test]
    fn dim_zero_identity() {
        let a = Arc::new(RoutingMatrix::from_entries(DMatrix::identity(2, 2)).unwrap());
        let p = Polytope::new(a, DVector::from_vec(vec![2.0, 5.0])).unwrap();
        assert_eq!(p.dim(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = feasible_point(&p, &mut rng).unwrap();
        assert_eq!(x.as_slice(), &[2.0, 5.0]);
        let (same, accepted) = rda_step(&p, &x, |_| 0.0, &mut rng).unwrap();
        assert!(accepted);
        assert_eq!(same.as_slice(), x.as_slice());
    }

    #[test]
    fn feasible_point_star() {
        let a = Arc::new(build_star(2).unwrap());
        let x_true = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = aggregate(&a, &x_true).unwrap();
        let p = Polytope::new(a.clone(), y.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = feasible_point(&p, &mut rng).unwrap();
        assert!(p.is_feasible(&x), "residual {}", p.residual_inf(&x));
        // Oracle: push the found point back through the mixing map.
        let y_check = aggregate(&a, &x).unwrap();
        assert!((&y_check - &y).amax() < 1e-8 * (1.0 + y.amax()));
    }

    #[test]
    fn zero_counter_forces_routes() {
        let a = Arc::new(build_star(2).unwrap());
        // No traffic out of node 0: routes (0,0) and (0,1) must be zero.
        let x_true = DVector::from_vec(vec![0.0, 0.0, 3.0, 4.0]);
        let y = aggregate(&a, &x_true).unwrap();
        let p = Polytope::new(a, y).unwrap();
        assert_eq!(p.forced_zero(), &[0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = feasible_point(&p, &mut rng).unwrap();
        assert_eq!(x[0], 0.0);
        assert_eq!(x[1], 0.0);
        assert!(p.is_feasible(&x));
    }

    #[test]
    fn infeasible_certified() {
        // x1 + x2 = 1 (row 0) and x2 = 5 (row 1): no nonnegative solution.
        let entries = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let a = Arc::new(RoutingMatrix::from_entries(entries).unwrap());
        let p = Polytope::new(a, DVector::from_vec(vec![1.0, 5.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(feasible_point(&p, &mut rng), Err(PolytopeError::Infeasible { .. })));
    }

    #[test]
    fn inconsistent_redundant_row_certified() {
        // Duplicate counter rows that disagree: y outside range(A).
        let entries = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let a = Arc::new(RoutingMatrix::from_entries(entries).unwrap());
        let p = Polytope::new(a, DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(feasible_point(&p, &mut rng), Err(PolytopeError::Infeasible { .. })));
    }

    #[test]
    fn rda_uniform_on_2_simplex_matches_dirichlet_moments() {
        // Dirichlet(1,1,1) marginals: mean 1/3, variance 1/18.
        let p = simplex_polytope(3);
        assert_eq!(p.dim(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = feasible_point(&p, &mut rng).unwrap();
        let steps = 100_000;
        let mut sums = [0.0f64; 3];
        let mut sq_sums = [0.0f64; 3];
        for _ in 0..steps {
            let (next, _) = rda_step(&p, &x, |_| 0.0, &mut rng).unwrap();
            x = next;
            for j in 0..3 {
                sums[j] += x[j];
                sq_sums[j] += x[j] * x[j];
            }
        }
        for j in 0..3 {
            let mean = sums[j] / steps as f64;
            let var = sq_sums[j] / steps as f64 - mean * mean;
            assert!((mean - 1.0 / 3.0).abs() < 0.02, "mean[{j}] = {mean}");
            assert!((var - 1.0 / 18.0).abs() < 0.005, "var[{j}] = {var}");
        }
    }

    #[test]
    fn rda_constant_density_always_accepts() {
        let p = simplex_polytope(4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut x = feasible_point(&p, &mut rng).unwrap();
        for _ in 0..500 {
            let (next, accepted) = rda_step(&p, &x, |_| 0.0, &mut rng).unwrap();
            assert!(accepted);
            x = next;
        }
    }

    #[test]
    fn rda_preserves_feasibility_on_random_polytopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let m = 2 + trial % 3;
            let n = m + 2 + trial % 4;
            let entries = DMatrix::from_fn(m, n, |_, _| {
                if rng.random_bool(0.6) {
                    1.0
                } else {
                    0.0
                }
            });
            let a = match RoutingMatrix::from_entries(entries) {
                Ok(a) => Arc::new(a),
                Err(_) => continue, // zero column: not a valid routing draw
            };
            let x_true = DVector::from_fn(n, |_, _| rng.random_range(0.1..4.0));
            let y = aggregate(&a, &x_true).unwrap();
            let p = Polytope::new(a, y).unwrap();
            let mut x = feasible_point(&p, &mut rng).unwrap();
            for _ in 0..500 {
                let (next, _) = rda_step(&p, &x, |_| 0.0, &mut rng).unwrap();
                x = next;
            }
            assert!(p.is_feasible(&x), "trial {trial}: residual {}", p.residual_inf(&x));
        }
    }

    #[test]
    fn rda_linear_density_matches_truncated_cdf() {
        // 1-dim polytope {x >= 0 : x1 + x2 = 1}; density f(x) = 0.5 + x2 on
        // x2 in [0,1] has CDF F(s) = (s^2 + s) / 2.
        let p = simplex_polytope(2);
        assert_eq!(p.dim(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut x = feasible_point(&p, &mut rng).unwrap();
        let log_density = |v: &DVector<f64>| (0.5 + v[1]).ln();
        let steps = 100_000;
        let mut samples = Vec::with_capacity(steps);
        for _ in 0..steps {
            let (next, _) = rda_step(&p, &x, log_density, &mut rng).unwrap();
            x = next;
            samples.push(x[1]);
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = |s: f64| (s * s + s) / 2.0;
        let mut ks: f64 = 0.0;
        for (i, &s) in samples.iter().enumerate() {
            let emp = (i + 1) as f64 / steps as f64;
            ks = ks.max((emp - cdf(s)).abs());
        }
        assert!(ks < 0.02, "Kolmogorov distance {ks}");
    }

    #[test]
    fn truncated_normal_sampling_matches_rejection_oracle() {
        // 1-dim polytope, Gaussian pulled toward the x2 = 1 face.
        let p = simplex_polytope(2);
        let mean = DVector::from_vec(vec![0.0, 2.0]);
        let cov = DVector::from_vec(vec![1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = feasible_point(&p, &mut rng).unwrap();

        let reps = 4000;
        let mut mc_sum = 0.0;
        for _ in 0..reps {
            let x = sample_truncated_normal_polytope(&p, &mean, &cov, 60, &init, &mut rng).unwrap();
            mc_sum += x[1];
        }
        let mc_mean = mc_sum / reps as f64;

        // Rejection oracle on the segment: density exp(-((1-s)^2 + (s-2)^2)/2).
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(10);
        let mut acc = 0.0;
        let mut count = 0usize;
        while count < 200_000 {
            let s: f64 = oracle_rng.random_range(0.0..1.0);
            let logf = -0.5 * ((1.0 - s) * (1.0 - s) + (s - 2.0) * (s - 2.0));
            let log_max = -0.5 * (0.0 + 1.0); // maximized at s = 1
            if oracle_rng.random::<f64>().ln() < logf - log_max {
                acc += s;
                count += 1;
            }
        }
        let oracle_mean = acc / count as f64;
        assert!(
            (mc_mean - oracle_mean).abs() < 0.02,
            "sampler mean {mc_mean} vs oracle {oracle_mean}"
        );
    }

    #[test]
    fn truncated_normal_zero_steps_returns_init() {
        let p = simplex_polytope(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init = feasible_point(&p, &mut rng).unwrap();
        let mean = DVector::from_element(3, 0.5);
        let cov = DVector::from_element(3, 1.0);
        let out = sample_truncated_normal_polytope(&p, &mean, &cov, 0, &init, &mut rng).unwrap();
        assert_eq!(out.as_slice(), init.as_slice());
    }

    #[test]
    fn ipfp_contingency_table_fixed_point() {
        // 2x2 table, row margins (3,7), column margins (4,6). Cells ordered
        // (r0c0, r0c1, r1c0, r1c1).
        let entries = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 1.0, 0.0, 0.0, // row 0 margin
                0.0, 0.0, 1.0, 1.0, // row 1 margin
                1.0, 0.0, 1.0, 0.0, // col 0 margin
                0.0, 1.0, 0.0, 1.0, // col 1 margin
            ],
        );
        let a = RoutingMatrix::from_entries(entries.clone()).unwrap();
        let y = DVector::from_vec(vec![3.0, 7.0, 4.0, 6.0]);
        let seed = DVector::from_element(4, 1.0);
        let report = ipfp(&a, &y, &seed, &IpfpOptions { tol: 1e-10, ..Default::default() }).unwrap();
        assert!(report.converged);

        // Independent oracle: direct alternating row/column scaling on the
        // 2x2 table, written without the routing-matrix machinery.
        let mut t = [[1.0f64; 2]; 2];
        for _ in 0..200 {
            for (r, target) in [3.0, 7.0].iter().enumerate() {
                let s: f64 = t[r][0] + t[r][1];
                t[r][0] *= target / s;
                t[r][1] *= target / s;
            }
            for (c, target) in [4.0, 6.0].iter().enumerate() {
                let s: f64 = t[0][c] + t[1][c];
                t[0][c] *= target / s;
                t[1][c] *= target / s;
            }
        }
        let expected = [t[0][0], t[0][1], t[1][0], t[1][1]];
        for (i, &e) in expected.iter().enumerate() {
            assert!((report.x[i] - e).abs() < 1e-8);
        }
        // The analytic fixed point is the independence table.
        let analytic = [1.2, 1.8, 2.8, 4.2];
        for (i, &e) in analytic.iter().enumerate() {
            assert!((report.x[i] - e).abs() < 1e-8, "cell {i}: {} vs {e}", report.x[i]);
        }
    }

    #[test]
    fn ipfp_identity_single_sweep() {
        let a = RoutingMatrix::from_entries(DMatrix::identity(3, 3)).unwrap();
        let y = DVector::from_vec(vec![2.0, 0.5, 9.0]);
        let seed = DVector::from_element(3, 1.0);
        let report = ipfp(&a, &y, &seed, &IpfpOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 1);
        for i in 0..3 {
            assert!((report.x[i] - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn ipfp_feasible_seed_unchanged() {
        let a = build_star(2).unwrap();
        let x_true = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = aggregate(&a, &x_true).unwrap();
        let report = ipfp(&a, &y, &x_true, &IpfpOptions::default()).unwrap();
        assert!(report.converged);
        for i in 0..4 {
            assert!((report.x[i] - x_true[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn ipfp_output_nonnegative_and_shuffle_converges() {
        let a = build_star(3).unwrap();
        let x_true = DVector::from_fn(9, |j, _| 0.2 + j as f64);
        let y = aggregate(&a, &x_true).unwrap();
        let seed = DVector::from_element(9, 1.0);
        for opts in [
            IpfpOptions::default(),
            IpfpOptions { shuffle_seed: Some(13), ..Default::default() },
        ] {
            let report = ipfp(&a, &y, &seed, &opts).unwrap();
            assert!(report.converged);
            assert!(report.x.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn chord_bounds_bracket_zero() {
        let p = simplex_polytope(3);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = feasible_point(&p, &mut rng).unwrap();
        let reduced = p.reduced.as_ref().unwrap();
        let x2 = p.extract_x2(&x);
        let x1 = p.derive_x1(&x2);
        for _ in 0..100 {
            let mut d = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            d /= d.norm();
            let w = reduced.c() * &d;
            let b = chord_bounds(&x1, &x2, &d, &w);
            assert!(b.l <= 0.0 && b.h >= 0.0, "bounds {:?}", b);
            assert!(b.h - b.l > 0.0);
        }
    }
}
