//! Manufactured solutions for the quasilinear state equation with `a = |t|`.
//! The forcing `u = −div[(1 + |y*|)∇y*]` is derived by hand from the chosen
//! `y*`; along `{y* = 0}` the one-sided limits of `sign(y*)|∇y*|²` average to
//! zero, which is the value used at nodes on that set.

mod common;

use std::f64::consts::PI;

use pcq_core::discretization::{l2_norm, solve_dirichlet, PointwiseForm};
use pcq_core::discretization::{assemble_operator, lumped_load};
use pcq_core::solvers::{solve_state, StateMethod};
use pcq_core::{BoxBounds, Execution, GridFunction, Mesh, Pc2Coefficient, ProblemSpec, TrackingObjective};

fn sign(t: f64) -> f64 {
    if t.abs() < 1e-12 {
        0.0
    } else {
        t.signum()
    }
}

fn spec_for(mesh: &std::sync::Arc<Mesh>, coef: Pc2Coefficient) -> ProblemSpec {
    ProblemSpec::new(
        GridFunction::constant(mesh, 1.0),
        coef,
        1.0,
        BoxBounds::constant(mesh, -1e3, 1e3).unwrap(),
        TrackingObjective::new(GridFunction::zeros(mesh)),
    )
    .unwrap()
}

/// Discrete L² error against the nodal interpolant of the exact solution.
fn error(
    mesh: &std::sync::Arc<Mesh>,
    exact: impl Fn(f64, f64) -> f64,
    forcing: impl Fn(f64, f64) -> f64,
    method: StateMethod,
) -> (f64, Vec<f64>) {
    let spec = spec_for(mesh, Pc2Coefficient::abs_shifted(0.0).unwrap());
    let u = GridFunction::interpolate(mesh, forcing);
    let (y, report) = solve_state(&spec, &u, &common::state_cfg().with_method(method), None).unwrap();
    assert!(report.converged);
    let e = l2_norm(&y.add_scaled(-1.0, &GridFunction::interpolate(mesh, exact)));
    (e, report.increments)
}

fn exact_1d(x: f64, _: f64) -> f64 {
    (2.0 * PI * x).sin()
}

fn forcing_1d(x: f64, _: f64) -> f64 {
    let y = exact_1d(x, 0.0);
    let dy = 2.0 * PI * (2.0 * PI * x).cos();
    (1.0 + y.abs()) * 4.0 * PI * PI * y - sign(y) * dy * dy
}

fn exact_2d(x: f64, y: f64) -> f64 {
    (2.0 * PI * x).sin() * (PI * y).sin()
}

fn forcing_2d(x: f64, y: f64) -> f64 {
    let v = exact_2d(x, y);
    let gx = 2.0 * PI * (2.0 * PI * x).cos() * (PI * y).sin();
    let gy = PI * (2.0 * PI * x).sin() * (PI * y).cos();
    (1.0 + v.abs()) * 5.0 * PI * PI * v - sign(v) * (gx * gx + gy * gy)
}

/// Once the iteration contracts, increments decrease monotonically.
fn eventually_monotone(increments: &[f64]) -> bool {
    let start = increments.len().saturating_sub(4);
    increments[start..].windows(2).all(|w| w[1] < w[0])
}

#[test]
fn second_order_convergence_1d_both_solvers() {
    for method in [StateMethod::Picard, StateMethod::Kirchhoff] {
        let errors: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let (e, inc) = error(&Mesh::interval(0.0, 1.0, n).unwrap(), exact_1d, forcing_1d, method);
                assert!(eventually_monotone(&inc), "{method:?} {inc:?}");
                e
            })
            .collect();
        for w in errors.windows(2) {
            assert!(w[0] / w[1] >= 3.5, "{method:?}: errors {errors:?}");
        }
    }
}

#[test]
fn second_order_convergence_2d() {
    let errors: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let mesh = Mesh::rectangle([0.0, 1.0], [0.0, 1.0], n).unwrap();
            let (e, inc) = error(&mesh, exact_2d, forcing_2d, StateMethod::Picard);
            assert!(eventually_monotone(&inc), "{inc:?}");
            e
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[0] / w[1] >= 3.5, "errors {errors:?}");
    }
}

#[test]
fn nonnegative_solution_example() {
    // y* = sin(πx) ≥ 0, u = π² sin(πx)(1 + sin(πx)) − π² cos²(πx)
    let exact = |x: f64, _: f64| (PI * x).sin();
    let forcing = |x: f64, _: f64| {
        PI * PI * (PI * x).sin() * (1.0 + (PI * x).sin()) - PI * PI * (PI * x).cos().powi(2)
    };
    let e: Vec<f64> = [32, 64]
        .iter()
        .map(|&n| error(&Mesh::interval(0.0, 1.0, n).unwrap(), exact, forcing, StateMethod::Picard).0)
        .collect();
    assert!(e[1] < 1e-3 && e[0] / e[1] >= 3.5, "{e:?}");
}

#[test]
fn linear_problem_takes_one_step() {
    // a ≡ 0: y = sin(πx) up to discretization error, first iterate exact.
    let mesh = Mesh::interval(0.0, 1.0, 64).unwrap();
    let spec = spec_for(&mesh, Pc2Coefficient::constant(0.0).unwrap());
    let u = GridFunction::interpolate(&mesh, |x, _| PI * PI * (PI * x).sin());
    let (y, report) = solve_state(&spec, &u, &common::state_cfg(), None).unwrap();
    assert!(report.converged);
    assert!(report.increments[1] <= common::STATE_TOL, "{:?}", report.increments);
    let exact = GridFunction::interpolate(&mesh, |x, _| (PI * x).sin());
    assert!(l2_norm(&y.add_scaled(-1.0, &exact)) < 1e-3);
    // plain Poisson solve on the same mesh
    let lap = assemble_operator(&mesh, &PointwiseForm::diffusion(|_| 1.0), Execution::Sequential).unwrap();
    let direct = solve_dirichlet(&lap, &lumped_load(&u), None).unwrap();
    assert!(l2_norm(&y.add_scaled(-1.0, &direct)) <= 1e-12);
}

#[test]
fn zero_control_gives_zero_state() {
    for method in [StateMethod::Picard, StateMethod::Kirchhoff] {
        let spec = common::nonsmooth_2d(8);
        let (y, report) =
            solve_state(&spec, &GridFunction::zeros(spec.mesh()), &common::state_cfg().with_method(method), None)
                .unwrap();
        assert!(report.converged);
        assert_eq!(y.max_abs(), 0.0);
    }
}
