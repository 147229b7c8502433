//! Problems and helpers shared by the integration tests.
#![allow(dead_code)]

pub mod dense;

use std::sync::Arc;

use pcq_core::discretization::l2_norm;
use pcq_core::reduced::{OptimizeConfig, ReducedProblem};
use pcq_core::second_order::StationaryTriple;
use pcq_core::solvers::StateSolveConfig;
use pcq_core::{BoxBounds, GridFunction, Mesh, Pc2Coefficient, ProblemSpec, TrackingObjective};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const STATE_TOL: f64 = 1e-13;

pub fn state_cfg() -> StateSolveConfig {
    StateSolveConfig::default().with_tol(STATE_TOL)
}

pub fn optimize_cfg() -> OptimizeConfig {
    OptimizeConfig { tol: 1e-10, ..Default::default() }
}

/// `b ≡ 1`, `a(t) = |t − 0.2|`, `ν = 10⁻²`, `0 ≤ u ≤ 4`, `y_d ≡ 0.5` on (0,1).
/// The optimal state rises from 0 to about 0.3, crossing the breakpoint
/// twice.
pub fn nonsmooth_1d(n: usize) -> ProblemSpec {
    let m = Mesh::interval(0.0, 1.0, n).unwrap();
    ProblemSpec::new(
        GridFunction::constant(&m, 1.0),
        Pc2Coefficient::abs_shifted(0.2).unwrap(),
        1e-2,
        BoxBounds::constant(&m, 0.0, 4.0).unwrap(),
        TrackingObjective::new(GridFunction::constant(&m, 0.5)),
    )
    .unwrap()
}

/// Unit square, `b = 1 + x/2 + y/4`, `a(t) = |t − 0.05|`, `ν = 10⁻²`,
/// `0 ≤ u ≤ 4`, `y_d ≡ 0.3`.
pub fn nonsmooth_2d(n: usize) -> ProblemSpec {
    let m = Mesh::rectangle([0.0, 1.0], [0.0, 1.0], n).unwrap();
    ProblemSpec::new(
        GridFunction::interpolate(&m, |x, y| 1.0 + 0.5 * x + 0.25 * y),
        Pc2Coefficient::abs_shifted(0.05).unwrap(),
        1e-2,
        BoxBounds::constant(&m, 0.0, 4.0).unwrap(),
        TrackingObjective::new(GridFunction::constant(&m, 0.3)),
    )
    .unwrap()
}

/// Linear-quadratic problem (`a ≡ 0`) whose optimal control hits both
/// bounds.
pub fn convex_1d(n: usize) -> ProblemSpec {
    let m = Mesh::interval(0.0, 1.0, n).unwrap();
    ProblemSpec::new(
        GridFunction::constant(&m, 1.0),
        Pc2Coefficient::constant(0.0).unwrap(),
        1e-3,
        BoxBounds::constant(&m, -2.0, 4.0).unwrap(),
        TrackingObjective::new(GridFunction::interpolate(&m, |x, _| {
            0.25 * (2.0 * std::f64::consts::PI * x).sin() + 0.1
        })),
    )
    .unwrap()
}

pub fn minimize(spec: &ProblemSpec) -> StationaryTriple {
    let reduced = ReducedProblem::new(spec, state_cfg()).unwrap();
    let (ev, report) = reduced.projected_gradient(&GridFunction::zeros(spec.mesh()), &optimize_cfg()).unwrap();
    assert!(report.converged(), "optimizer: {:?} at {:e}", report.termination, report.foc_residual);
    StationaryTriple::from(ev)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nodal Gaussian field, smoothed once by neighbour averaging and
/// normalized in L².
pub fn random_direction(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> GridFunction {
    let raw: Vec<f64> = (0..mesh.num_nodes()).map(|_| StandardNormal.sample(rng)).collect();
    let values = mesh
        .neighbors()
        .iter()
        .enumerate()
        .map(|(k, nb)| (raw[k] + nb.iter().map(|&j| raw[j]).sum::<f64>()) / (1 + nb.len()) as f64)
        .collect();
    let h = GridFunction::new(mesh.clone(), values).unwrap();
    h.scale(1.0 / l2_norm(&h))
}

pub fn rel_l2(a: &GridFunction, b: &GridFunction) -> f64 {
    l2_norm(&a.add_scaled(-1.0, b)) / l2_norm(b)
}
