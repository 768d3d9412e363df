//! Gravity and tomogravity estimators.
//!
//! Both serve double duty: as comparison methods in the benchmark tables
//! and as cheap stage-1 estimates for prior calibration. They work from
//! per-node inbound/outbound totals, which the counter map extracts from
//! the raw counter vector.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::network::{RoutingMatrix, Topology};
use crate::polytope::{ipfp, IpfpOptions};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("counter map does not cover node {node} ({direction})")]
    MissingTotals { node: usize, direction: &'static str },
    #[error("counter map points at counter {index}, but only {m} exist")]
    CounterOutOfRange { index: usize, m: usize },
    #[error("totals must be nonnegative (node {node})")]
    NegativeTotal { node: usize },
    #[error(transparent)]
    Polytope(#[from] crate::polytope::PolytopeError),
}

/// Per-node aggregate traffic at one epoch.
#[derive(Debug, Clone)]
pub struct NodeTotals {
    pub inbound: DVector<f64>,
    pub outbound: DVector<f64>,
    /// Total outbound volume (equals total inbound on a conservative
    /// network).
    pub total: f64,
    /// |sum(in) - sum(out)| relative to the total; nonzero values indicate a
    /// non-conservative network but are not fatal.
    pub imbalance: f64,
}

impl NodeTotals {
    pub fn new(inbound: DVector<f64>, outbound: DVector<f64>) -> Result<Self, BaselineError> {
        if inbound.len() != outbound.len() {
            return Err(BaselineError::LengthMismatch {
                expected: outbound.len(),
                got: inbound.len(),
            });
        }
        for (node, v) in inbound.iter().chain(outbound.iter()).enumerate() {
            if *v < 0.0 {
                return Err(BaselineError::NegativeTotal { node: node % inbound.len() });
            }
        }
        let total_out: f64 = outbound.iter().sum();
        let total_in: f64 = inbound.iter().sum();
        let imbalance = (total_in - total_out).abs() / total_out.max(1.0);
        Ok(Self { inbound, outbound, total: total_out, imbalance })
    }

    pub fn node_count(&self) -> usize {
        self.outbound.len()
    }
}

/// Maps each node to the counter indices holding its outbound and inbound
/// aggregate volumes. `None` marks a gap (node without that counter).
#[derive(Debug, Clone)]
pub struct CounterMap {
    pub outbound: Vec<Option<usize>>,
    pub inbound: Vec<Option<usize>>,
}

impl CounterMap {
    /// Layout used by all built-in topologies: counters 0..d are per-node
    /// outbound, d..2d per-node inbound.
    pub fn for_topology(topology: &Topology) -> Option<CounterMap> {
        let d = topology.node_count()?;
        Some(CounterMap {
            outbound: (0..d).map(Some).collect(),
            inbound: (0..d).map(|j| Some(d + j)).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.outbound.len()
    }
}

/// Extract per-node totals from one epoch's counter vector.
pub fn node_totals_from_counters(
    y: &DVector<f64>,
    a: &RoutingMatrix,
    map: &CounterMap,
) -> Result<NodeTotals, BaselineError> {
    if y.len() != a.m() {
        return Err(BaselineError::LengthMismatch { expected: a.m(), got: y.len() });
    }
    let d = map.node_count();
    if map.inbound.len() != d {
        return Err(BaselineError::LengthMismatch { expected: d, got: map.inbound.len() });
    }
    let mut outbound = DVector::zeros(d);
    let mut inbound = DVector::zeros(d);
    for node in 0..d {
        let oi = map.outbound[node]
            .ok_or(BaselineError::MissingTotals { node, direction: "outbound" })?;
        let ii = map.inbound[node]
            .ok_or(BaselineError::MissingTotals { node, direction: "inbound" })?;
        if oi >= a.m() {
            return Err(BaselineError::CounterOutOfRange { index: oi, m: a.m() });
        }
        if ii >= a.m() {
            return Err(BaselineError::CounterOutOfRange { index: ii, m: a.m() });
        }
        outbound[node] = y[oi].max(0.0);
        inbound[node] = y[ii].max(0.0);
    }
    NodeTotals::new(inbound, outbound)
}

/// Rank-1 gravity estimate: route (o, d) carries
/// `outbound_o * inbound_d / total`. Routes are ordered origin-major, the
/// convention used by every builder in this crate.
pub fn gravity(totals: &NodeTotals) -> DVector<f64> {
    let d = totals.node_count();
    let mut x = DVector::zeros(d * d);
    if totals.total <= 0.0 {
        return x;
    }
    for o in 0..d {
        for dest in 0..d {
            x[o * d + dest] = totals.outbound[o] * totals.inbound[dest] / totals.total;
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct TomogravityResult {
    pub x: DVector<f64>,
    /// The regularized system was singular and the plain gravity estimate
    /// was returned instead.
    pub fell_back_to_gravity: bool,
}

/// Gravity-regularized least squares:
/// minimize ||y - A x||^2 + lam^2 sum_j (x_j - g_j)^2 / g_j over routes with
/// positive gravity mass (zero-gravity routes stay at zero). Negative
/// components are clipped and a single IPFP sweep restores the margins.
pub fn tomogravity(
    y: &DVector<f64>,
    a: &RoutingMatrix,
    totals: &NodeTotals,
    lam: f64,
) -> Result<TomogravityResult, BaselineError> {
    if y.len() != a.m() {
        return Err(BaselineError::LengthMismatch { expected: a.m(), got: y.len() });
    }
    let g = gravity(totals);
    if g.len() != a.n() {
        return Err(BaselineError::LengthMismatch { expected: a.n(), got: g.len() });
    }
    let free: Vec<usize> = (0..a.n()).filter(|&j| g[j] > 0.0).collect();
    if free.is_empty() {
        return Ok(TomogravityResult { x: g, fell_back_to_gravity: false });
    }
    let k = free.len();
    let entries = a.entries();
    let a_free = DMatrix::from_fn(a.m(), k, |i, j| entries[(i, free[j])]);
    let lam2 = lam * lam;
    let mut lhs = a_free.transpose() * &a_free;
    let mut rhs = a_free.transpose() * y;
    for (jj, &j) in free.iter().enumerate() {
        lhs[(jj, jj)] += lam2 / g[j];
        rhs[jj] += lam2; // lam^2 / g_j * g_j
    }
    let solved = match Cholesky::new(lhs) {
        Some(chol) => chol.solve(&rhs),
        None => return Ok(TomogravityResult { x: g, fell_back_to_gravity: true }),
    };
    let mut x = DVector::zeros(a.n());
    for (jj, &j) in free.iter().enumerate() {
        x[j] = solved[jj].max(0.0);
    }
    // One margin-restoring sweep; the seed must be strictly positive.
    let scale = (y.iter().sum::<f64>() / (a.n() as f64)).max(1.0);
    let seed = x.map(|v| v.max(1e-12 * scale));
    let report = ipfp(a, y, &seed, &IpfpOptions { max_iter: 1, ..Default::default() })?;
    Ok(TomogravityResult { x: report.x, fell_back_to_gravity: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{aggregate, build_star};

    fn star_totals(d: usize, y: &DVector<f64>, a: &RoutingMatrix) -> NodeTotals {
        let map = CounterMap::for_topology(&Topology::Star { nodes: d }).unwrap();
        node_totals_from_counters(y, a, &map).unwrap()
    }

    #[test]
    fn gravity_symmetric_case() {
        let totals = NodeTotals::new(
            DVector::from_vec(vec![2.0, 2.0]),
            DVector::from_vec(vec![2.0, 2.0]),
        )
        .unwrap();
        let x = gravity(&totals);
        for j in 0..4 {
            assert!((x[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gravity_zero_margin_annihilates_row() {
        let totals = NodeTotals::new(
            DVector::from_vec(vec![3.0, 1.0]),
            DVector::from_vec(vec![4.0, 0.0]),
        )
        .unwrap();
        let x = gravity(&totals);
        assert_eq!(x[2], 0.0);
        assert_eq!(x[3], 0.0);
        assert!((x[0] - 3.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gravity_margins_reproduce_inputs() {
        let inbound = DVector::from_vec(vec![1.0, 4.0, 5.0]);
        let outbound = DVector::from_vec(vec![6.0, 2.0, 2.0]);
        let totals = NodeTotals::new(inbound.clone(), outbound.clone()).unwrap();
        let x = gravity(&totals);
        for o in 0..3 {
            let row: f64 = (0..3).map(|dd| x[o * 3 + dd]).sum();
            assert!((row - outbound[o]).abs() < 1e-12);
        }
        for dd in 0..3 {
            let col: f64 = (0..3).map(|o| x[o * 3 + dd]).sum();
            assert!((col - inbound[dd]).abs() < 1e-12);
        }
    }

    #[test]
    fn gravity_feasible_on_star() {
        let a = build_star(3).unwrap();
        let x_true = DVector::from_fn(9, |j, _| 1.0 + j as f64);
        let y = aggregate(&a, &x_true).unwrap();
        let totals = star_totals(3, &y, &a);
        let x = gravity(&totals);
        let y_hat = aggregate(&a, &x).unwrap();
        assert!((&y_hat - &y).amax() < 1e-9 * (1.0 + y.amax()));
    }

    #[test]
    fn gravity_zero_total_gives_zero_estimate() {
        let a = build_star(2).unwrap();
        let y = DVector::zeros(4);
        let totals = star_totals(2, &y, &a);
        assert_eq!(gravity(&totals).iter().filter(|&&v| v != 0.0).count(), 0);
    }

    #[test]
    fn tomogravity_equals_gravity_on_star() {
        let a = build_star(4).unwrap();
        let x_true = DVector::from_fn(16, |j, _| 0.5 + (j % 5) as f64);
        let y = aggregate(&a, &x_true).unwrap();
        let totals = star_totals(4, &y, &a);
        let g = gravity(&totals);
        let t = tomogravity(&y, &a, &totals, 0.01).unwrap();
        assert!(!t.fell_back_to_gravity);
        let rel = (&t.x - &g).amax() / (1.0 + g.amax());
        assert!(rel < 1e-6, "tomogravity deviates from gravity by {rel}");
    }

    #[test]
    fn tomogravity_improves_on_inconsistent_gravity() {
        // On a two-router network the link counters see the actual cross
        // traffic, which the rank-1 gravity split generally misses.
        use crate::network::build_two_router;
        let a = build_two_router(1, 1).unwrap();
        let x_true = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = aggregate(&a, &x_true).unwrap();
        let map = CounterMap::for_topology(&Topology::TwoRouter { left: 1, right: 1 }).unwrap();
        let totals = node_totals_from_counters(&y, &a, &map).unwrap();
        let g = gravity(&totals);
        let resid_g = (a.entries() * &g - &y).norm();
        assert!(resid_g > 0.1, "toy must make gravity inconsistent, got {resid_g}");
        let t = tomogravity(&y, &a, &totals, 0.01).unwrap();
        let resid_t = (a.entries() * &t.x - &y).norm();
        assert!(resid_t < resid_g, "{resid_t} !< {resid_g}");
    }

    #[test]
    fn tomogravity_objective_never_worse_than_gravity() {
        let a = build_star(3).unwrap();
        let x_true = DVector::from_fn(9, |j, _| 1.0 + (j as f64 * 1.3) % 4.0);
        let y = aggregate(&a, &x_true).unwrap();
        let totals = star_totals(3, &y, &a);
        let g = gravity(&totals);
        for lam in [0.001, 0.01, 0.1] {
            let t = tomogravity(&y, &a, &totals, lam).unwrap();
            let obj = |x: &DVector<f64>| {
                let r = (a.entries() * x - &y).norm_squared();
                let pen: f64 = (0..9)
                    .filter(|&j| g[j] > 0.0)
                    .map(|j| (x[j] - g[j]).powi(2) / g[j])
                    .sum();
                r + lam * lam * pen
            };
            assert!(obj(&t.x) <= obj(&g) + 1e-9);
        }
    }

    #[test]
    fn tomogravity_lambda_insensitivity() {
        let a = build_star(4).unwrap();
        let x_true = DVector::from_fn(16, |j, _| 2.0 + ((j * 7) % 11) as f64);
        let y = aggregate(&a, &x_true).unwrap();
        let totals = star_totals(4, &y, &a);
        let base = tomogravity(&y, &a, &totals, 0.01).unwrap().x;
        for lam in [0.001, 0.1] {
            let other = tomogravity(&y, &a, &totals, lam).unwrap().x;
            let rel = (&other - &base).norm() / base.norm();
            assert!(rel < 0.05, "lam {lam}: relative L2 shift {rel}");
        }
    }

    #[test]
    fn node_totals_star_2_from_aggregate() {
        let a = build_star(2).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = aggregate(&a, &x).unwrap();
        let totals = star_totals(2, &y, &a);
        assert_eq!(totals.outbound.as_slice(), &[3.0, 7.0]);
        assert_eq!(totals.inbound.as_slice(), &[4.0, 6.0]);
        assert!((totals.total - 10.0).abs() < 1e-12);
        assert!(totals.imbalance < 1e-12);
    }

    #[test]
    fn counter_map_gap_is_reported() {
        let a = build_star(2).unwrap();
        let y = DVector::zeros(4);
        let map = CounterMap {
            outbound: vec![Some(0), None],
            inbound: vec![Some(2), Some(3)],
        };
        assert!(matches!(
            node_totals_from_counters(&y, &a, &map),
            Err(BaselineError::MissingTotals { node: 1, direction: "outbound" })
        ));
    }
}
