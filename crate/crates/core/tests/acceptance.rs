//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::dense::DenseLq;
use common::{minimize, random_direction, rel_l2, rng, state_cfg, STATE_TOL};
use pcq_core::discretization::{inner_l2, l2_norm};
use pcq_core::reduced::{hamiltonian_scale, pontryagin_gap, ReducedProblem};
use pcq_core::second_order::{
    critical_cone_project, sigma_functional, soc_report, taylor_residual, Curvature, SocConfig, StationaryTriple,
};
use pcq_core::solvers::{solve_adjoint, solve_linearized, solve_state, StateMethod};
use pcq_core::{
    BoxBounds, Execution, GridFunction, Mesh, Objective, Pc2Coefficient, ProblemSpec, TrackingObjective,
};

type Outcome = Result<String, String>;
type Field = fn(f64, f64) -> f64;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn sign(t: f64) -> f64 {
    if t.abs() < 1e-12 {
        0.0
    } else {
        t.signum()
    }
}

fn plain_spec(mesh: &std::sync::Arc<Mesh>, b: GridFunction, coef: Pc2Coefficient) -> ProblemSpec {
    ProblemSpec::new(
        b,
        coef,
        1e-2,
        BoxBounds::constant(mesh, -1e3, 1e3).unwrap(),
        TrackingObjective::new(GridFunction::zeros(mesh)),
    )
    .unwrap()
}

fn manufactured_error(mesh: &std::sync::Arc<Mesh>, method: StateMethod) -> Result<f64, String> {
    let spec = plain_spec(mesh, GridFunction::constant(mesh, 1.0), Pc2Coefficient::abs_shifted(0.0).unwrap());
    let (exact, forcing): (Field, Field) = if mesh.dim() == 1 {
        (
            |x, _| (2.0 * PI * x).sin(),
            |x, _| {
                let y = (2.0 * PI * x).sin();
                let dy = 2.0 * PI * (2.0 * PI * x).cos();
                (1.0 + y.abs()) * 4.0 * PI * PI * y - sign(y) * dy * dy
            },
        )
    } else {
        (
            |x, y| (2.0 * PI * x).sin() * (PI * y).sin(),
            |x, y| {
                let v = (2.0 * PI * x).sin() * (PI * y).sin();
                let gx = 2.0 * PI * (2.0 * PI * x).cos() * (PI * y).sin();
                let gy = PI * (2.0 * PI * x).sin() * (PI * y).cos();
                (1.0 + v.abs()) * 5.0 * PI * PI * v - sign(v) * (gx * gx + gy * gy)
            },
        )
    };
    let u = GridFunction::interpolate(mesh, forcing);
    let (y, report) = solve_state(&spec, &u, &state_cfg().with_method(method), None).map_err(|e| e.to_string())?;
    ensure!(report.converged, "state solve did not converge");
    Ok(l2_norm(&y.add_scaled(-1.0, &GridFunction::interpolate(mesh, exact))))
}

fn criterion_1() -> Outcome {
    let mut lines = Vec::new();
    for (dim, method) in [(1, StateMethod::Picard), (1, StateMethod::Kirchhoff), (2, StateMethod::Picard)] {
        let sizes: &[usize] = if dim == 1 { &[64, 128, 256] } else { &[16, 32, 64] };
        let mut errors = Vec::new();
        for &n in sizes {
            let mesh = if dim == 1 {
                Mesh::interval(0.0, 1.0, n).unwrap()
            } else {
                Mesh::rectangle([0.0, 1.0], [0.0, 1.0], n).unwrap()
            };
            let start = Instant::now();
            errors.push(manufactured_error(&mesh, method)?);
            let secs = start.elapsed().as_secs_f64();
            ensure!(secs < 30.0, "{dim}D n={n} took {secs:.1} s");
        }
        let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
        ensure!(ratios.iter().all(|&r| r >= 3.5), "{dim}D {method:?} error ratios {ratios:?}");
        lines.push(format!("{dim}D {method:?} ratios {}", fmt_list(&ratios)));
    }
    Ok(lines.join("; "))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for mesh in [Mesh::interval(0.0, 1.0, 64).unwrap(), Mesh::rectangle([0.0, 1.0], [0.0, 1.0], 32).unwrap()] {
        let bs = [
            GridFunction::constant(&mesh, 1.0),
            GridFunction::interpolate(&mesh, |x, y| 1.0 + 0.5 * x + 0.25 * y),
        ];
        for coef in [Pc2Coefficient::abs_shifted(0.0).unwrap(), Pc2Coefficient::ramp(0.1, 2.0).unwrap()] {
            for b in &bs {
                let spec = plain_spec(&mesh, b.clone(), coef.clone());
                let u = GridFunction::interpolate(&mesh, |x, y| 40.0 * (x - 0.4) * (1.0 + y));
                let (yp, _) = solve_state(&spec, &u, &state_cfg(), None).map_err(|e| e.to_string())?;
                let (yk, _) = solve_state(&spec, &u, &state_cfg().with_method(StateMethod::Kirchhoff), None)
                    .map_err(|e| e.to_string())?;
                worst = worst.max(rel_l2(&yk, &yp));
            }
        }
    }
    ensure!(worst <= 1e-6, "largest relative L2 difference {worst:e}");
    Ok(format!("largest relative L2 difference {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    for spec in [common::nonsmooth_1d(64), common::nonsmooth_2d(16)] {
        let mesh = spec.mesh().clone();
        let u = GridFunction::constant(&mesh, 2.0);
        let (y, _) = solve_state(&spec, &u, &state_cfg(), None).map_err(|e| e.to_string())?;
        let t = spec.coefficient().breakpoints()[0];
        ensure!(y.min() < t && y.max() > t, "state range misses the breakpoint");
        let mut rng = rng(3);
        for _ in 0..5 {
            let h = random_direction(&mesh, &mut rng);
            let z = solve_linearized(&spec, &y, &h).map_err(|e| e.to_string())?;
            let mut errs = Vec::new();
            for s in [1e-2, 1e-3, 1e-4] {
                let (ys, _) =
                    solve_state(&spec, &u.add_scaled(s, &h), &state_cfg(), Some(&y)).map_err(|e| e.to_string())?;
                errs.push(l2_norm(&ys.add_scaled(-1.0, &y).scale(1.0 / s).add_scaled(-1.0, &z)));
            }
            ensure!(errs[0] > errs[1] && errs[1] > errs[2], "not monotone: {errs:?}");
            let ratio = errs[2] / l2_norm(&z);
            ensure!(ratio <= 1e-3, "relative error {ratio:e} at s = 1e-4");
            worst_ratio = worst_ratio.max(ratio);
        }
    }
    Ok(format!("worst relative error at s=1e-4: {worst_ratio:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    for spec in [common::nonsmooth_1d(64), common::nonsmooth_2d(16)] {
        let mesh = spec.mesh().clone();
        let (y, _) =
            solve_state(&spec, &GridFunction::constant(&mesh, 2.5), &state_cfg(), None).map_err(|e| e.to_string())?;
        let g = spec.objective().derivative(&y);
        let phi = solve_adjoint(&spec, &y, &g).map_err(|e| e.to_string())?;
        let mut rng = rng(9);
        for _ in 0..10 {
            let v = random_direction(&mesh, &mut rng);
            let z = solve_linearized(&spec, &y, &v).map_err(|e| e.to_string())?;
            let lhs = inner_l2(&g, &z).unwrap();
            let rhs = inner_l2(&phi, &v).unwrap();
            let scale = l2_norm(&g) * l2_norm(&z) + l2_norm(&phi) * l2_norm(&v);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    ensure!(worst <= 1e-10, "duality gap {worst:e}·scale");
    Ok(format!("largest gap {worst:.2e}·scale"))
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    for spec in [common::nonsmooth_1d(64), common::nonsmooth_2d(16)] {
        let reduced = ReducedProblem::new(&spec, state_cfg()).unwrap();
        let mesh = spec.mesh().clone();
        let u = GridFunction::interpolate(&mesh, |x, y| 1.5 + x - 0.5 * y);
        let ev = reduced.evaluate(&u, None).map_err(|e| e.to_string())?;
        let mut rng = rng(13);
        for _ in 0..10 {
            let h = random_direction(&mesh, &mut rng);
            let s = 1e-5;
            let plus = reduced.objective_warm(&u.add_scaled(s, &h), &ev.y).map_err(|e| e.to_string())?;
            let minus = reduced.objective_warm(&u.add_scaled(-s, &h), &ev.y).map_err(|e| e.to_string())?;
            let exact = inner_l2(&ev.d, &h).unwrap();
            worst = worst.max(((plus - minus) / (2.0 * s) - exact).abs() / exact.abs());
        }
    }
    ensure!(worst <= 1e-6, "relative error {worst:e}");
    Ok(format!("worst relative error {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let convex = common::convex_1d(32);
    let triple = minimize(&convex);
    let reduced = ReducedProblem::new(&convex, state_cfg()).unwrap();
    let mut lq_rng = rng(2);
    let mut worst_lq: f64 = 0.0;
    for size in [1.0, 1e-1, 1e-2] {
        let u = triple.u.add_scaled(size, &random_direction(convex.mesh(), &mut lq_rng));
        let t = taylor_residual(&reduced, &triple, &u).map_err(|e| e.to_string())?;
        worst_lq = worst_lq.max(t.residual / t.scale);
    }
    ensure!(worst_lq <= 1e-9, "a ≡ 0 residual {worst_lq:e}·scale");

    let mut table = Vec::new();
    for spec in [common::nonsmooth_1d(64), common::nonsmooth_2d(16)] {
        let triple = minimize(&spec);
        let reduced = ReducedProblem::new(&spec, state_cfg()).unwrap();
        let mut rng = rng(4);
        for size in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3] {
            let u = spec.bounds().project(&triple.u.add_scaled(size, &random_direction(spec.mesh(), &mut rng)));
            let t = taylor_residual(&reduced, &triple, &u).map_err(|e| e.to_string())?;
            ensure!(t.residual <= 10.0 * STATE_TOL, "{}D size {size}: residual {:e}", spec.mesh().dim(), t.residual);
            table.push(format!("{}D {size:.0e}:{:.1e}", spec.mesh().dim(), t.residual));
        }
    }
    Ok(format!("a≡0 {worst_lq:.1e}·scale; nonsmooth {}", table.join(" ")))
}

fn criterion_7() -> Outcome {
    let coef = Pc2Coefficient::abs_shifted(0.5).unwrap();
    let sigma = |n: usize, f: &dyn Fn(f64) -> f64| {
        let mesh = Mesh::interval(0.0, 1.0, n).unwrap();
        let y = GridFunction::interpolate(&mesh, |x, _| f(x));
        sigma_functional(&coef, &y, &SocConfig::default(), Execution::Parallel).value
    };
    let crossing = sigma(256, &|x| x);
    let plateau = sigma(256, &|x| x.min(0.5));
    let two = sigma(400, &|x| {
        if x <= 0.25 {
            2.0 * x
        } else if x <= 0.4 {
            0.5
        } else if x <= 0.55 {
            0.5 + 2.0 * (x - 0.4)
        } else if x <= 0.7 {
            0.8 - 2.0 * (x - 0.55)
        } else {
            0.5
        }
    });
    ensure!((crossing - 4.0).abs() <= 0.2, "crossing {crossing}");
    ensure!((plateau - 2.0).abs() <= 0.1, "plateau {plateau}");
    ensure!((2.0..=8.0).contains(&two), "card(J)=2 case {two}");
    Ok(format!("crossing {crossing:.4}, plateau {plateau:.4}, card(J)=2 {two:.4} in [2, 8]"))
}

fn homogeneity_cfg() -> SocConfig {
    SocConfig { n_min: 6, ..Default::default() }
}

fn cone_directions(spec: &ProblemSpec, triple: &StationaryTriple, count: usize) -> Vec<GridFunction> {
    let mut rng = rng(17);
    let mut out = Vec::new();
    while out.len() < count {
        let h = random_direction(spec.mesh(), &mut rng);
        let h = critical_cone_project(&triple.u, &triple.d, spec.bounds(), &h, 1e-6, 1e-8);
        let norm = l2_norm(&h);
        if norm > 0.0 {
            out.push(h.scale(1.0 / norm));
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let cfg = homogeneity_cfg();
    let mut worst: f64 = 0.0;
    for spec in [common::nonsmooth_1d(64), common::nonsmooth_2d(16)] {
        let triple = minimize(&spec);
        let reduced = ReducedProblem::new(&spec, state_cfg()).unwrap();
        let curv = Curvature::new(&reduced, &triple, false);
        for h in cone_directions(&spec, &triple, 5) {
            let q = curv.q_two(&h, &cfg).map_err(|e| e.to_string())?.value;
            let q2 = curv.q_two(&h.scale(2.0), &cfg).map_err(|e| e.to_string())?.value;
            let rel = (q2 - 4.0 * q).abs() / (4.0 * q).abs().max(f64::EPSILON);
            worst = worst.max(rel);
        }
    }
    ensure!(worst <= 0.01, "relative defect {worst:e}");
    Ok(format!("largest relative defect {worst:.2e} (window n ≥ {})", cfg.n_min))
}

fn criterion_9_10() -> (Outcome, Outcome) {
    let mut worst_excess = f64::NEG_INFINITY;
    let mut min_scaled = f64::INFINITY;
    let mut failure_9 = None;
    let mut failure_10 = None;
    for spec in [common::nonsmooth_1d(64), common::nonsmooth_2d(16)] {
        let triple = minimize(&spec);
        let reduced = ReducedProblem::new(&spec, state_cfg()).unwrap();
        let scale = triple.value.abs().max(1.0);
        let cfg = SocConfig { snc_tol: 1e-6 * scale, directions: 20, ..Default::default() };
        let report = match soc_report(&reduced, &triple, &cfg) {
            Ok(r) => r,
            Err(e) => return (Err(e.to_string()), Err(e.to_string())),
        };
        for d in &report.directions {
            let excess = d.q_2.value.abs() - d.q2_bound - 1e-8;
            worst_excess = worst_excess.max(excess);
            if excess > 0.0 {
                failure_9 = Some(format!("direction {}: |Q2| {:e} > bound {:e}", d.index, d.q_2.value, d.q2_bound));
            }
        }
        if let Some(m) = report.min_total {
            min_scaled = min_scaled.min(m / scale);
        }
        if !report.snc_ok || report.directions.len() + report.skipped_directions != 20 {
            failure_10 = Some(format!("{}D: {}", spec.mesh().dim(), report.message));
        }
    }
    let c9 = failure_9.map_or_else(|| Ok(format!("largest |Q2| − bound {worst_excess:.2e}")), Err);
    let c10 = failure_10.map_or_else(|| Ok(format!("smallest total {min_scaled:.3e}·scale")), Err);
    (c9, c10)
}

fn criterion_11() -> Outcome {
    let spec = common::convex_1d(32);
    let triple = minimize(&spec);
    let reduced = ReducedProblem::new(&spec, state_cfg()).unwrap();
    let report = soc_report(&reduced, &triple, &SocConfig::default()).map_err(|e| e.to_string())?;
    let margin = report.ssc_margin.ok_or("critical cone trivial")?;
    ensure!(margin >= spec.nu() / 2.0 - 1e-8, "margin {margin:e} < ν/2");
    let oracle = DenseLq::new(&spec).kkt_solution(-2.0, 4.0);
    let err = triple.u.values().iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(err <= 1e-6, "KKT deviation {err:e}");
    Ok(format!("ssc_margin {margin:.4e} (ν/2 = {:.1e}), KKT deviation {err:.1e}", spec.nu() / 2.0))
}

fn criterion_12() -> Outcome {
    let mut worst: f64 = 0.0;
    for spec in [common::nonsmooth_1d(64), common::nonsmooth_2d(16), common::convex_1d(32)] {
        let triple = minimize(&spec);
        let scale = hamiltonian_scale(spec.bounds(), spec.nu(), &triple.phi);
        let gap = pontryagin_gap(spec.bounds(), spec.nu(), &triple.u, &triple.phi);
        ensure!(gap <= 1e-6 * scale, "gap {gap:e} at the minimizer");
        worst = worst.max(gap / scale);
        let perturbed = spec.bounds().project(&triple.u.add_scaled(0.1, &GridFunction::constant(spec.mesh(), 1.0)));
        let reduced = ReducedProblem::new(&spec, state_cfg()).unwrap();
        let off = reduced.pontryagin_gap(&perturbed).map_err(|e| e.to_string())?;
        ensure!(off > 0.0, "perturbed gap {off:e}");
    }
    Ok(format!("largest gap at minimizers {worst:.2e}·scale; positive when perturbed"))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ")
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let started = Instant::now();
    let (c9, c10) = guarded_pair(criterion_9_10);
    let results: Vec<(&str, Outcome)> = vec![
        ("1 manufactured-solution convergence", guarded(criterion_1)),
        ("2 Picard/Kirchhoff agreement", guarded(criterion_2)),
        ("3 linearization difference quotients", guarded(criterion_3)),
        ("4 adjoint duality", guarded(criterion_4)),
        ("5 gradient check", guarded(criterion_5)),
        ("6 Taylor identity", guarded(criterion_6)),
        ("7 jump functional closed forms", guarded(criterion_7)),
        ("8 Q2 homogeneity", guarded(criterion_8)),
        ("9 Q2 bound", c9),
        ("10 necessary condition at minimizers", c10),
        ("11 convex sanity", guarded(criterion_11)),
        ("12 Pontryagin gap", guarded(criterion_12)),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed in {:.1} s", results.len() - failed, results.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn guarded_pair(f: impl FnOnce() -> (Outcome, Outcome)) -> (Outcome, Outcome) {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(pair) => pair,
        Err(_) => (Err("panicked".into()), Err("panicked".into())),
    }
}
