//! Inference of origin-destination traffic from aggregate link counters.
//!
//! Observed counter series `y_t` relate to latent per-route traffic `x_t`
//! through a known routing matrix, `y_t = A x_t`, with far fewer counters
//! than routes. This crate recovers `x_t` by combining:
//!
//! * a Gaussian state-space calibration model fit by windowed maximum
//!   likelihood ([`gssm`]),
//! * prior schedules derived from those fits ([`calibrate`]),
//! * a multilevel state-space model sampled with a feasibility-respecting
//!   sample-importance-resample-move particle filter ([`multilevel`]),
//! * gravity/tomogravity baselines ([`baselines`]) and the simulation
//!   harnesses used to compare them ([`simstudy`]).
//!
//! All samplers operate directly on the solution polytope
//! `{x >= 0 : A x = y}` ([`polytope`]), so every estimate is consistent with
//! the observed counters by construction.

pub mod baselines;
pub mod calibrate;
pub mod gssm;
pub mod io;
pub mod multilevel;
pub mod network;
pub mod optim;
pub mod polytope;
pub mod simstudy;

pub use baselines::{gravity, node_totals_from_counters, tomogravity, CounterMap, NodeTotals};
pub use calibrate::{correct_and_smooth, naive_priors, priors_from_gravity, priors_from_ssm, PriorSchedule};
pub use gssm::{SsmFit, SsmParams};
pub use multilevel::{ess, sirm_filter, FilterConfig, Particle, PosteriorSummary};
pub use network::{
    aggregate, build_chain, build_star, build_two_router, RoutingMatrix, Topology,
};
pub use polytope::{feasible_point, ipfp, rda_step, sample_truncated_normal_polytope, Polytope};
