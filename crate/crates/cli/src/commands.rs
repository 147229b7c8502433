use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use pcq_core::config::Experiment;
use pcq_core::discretization::{inner_l2, l2_norm, norms, Norms};
use pcq_core::reduced::{
    hamiltonian_scale, pontryagin_gap, pontryagin_gaps, Evaluation, OptimizeReport, ReducedProblem,
    Termination,
};
use pcq_core::second_order::{
    sigma_functional, soc_report, taylor_residual, CurvatureReport, SigmaEstimate, StationaryTriple,
    TaylorTerms,
};
use pcq_core::solvers::{solve_state, SolveReport};
use pcq_core::GridFunction;

use crate::output::{num, OutDir};
use crate::Outcome;

/// Perturbation sizes of the Taylor table.
const TAYLOR_SIZES: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
const TAYLOR_DIRECTIONS: usize = 3;
/// Relative part of the Taylor tolerance; the absolute part is ten state
/// tolerances.
const TAYLOR_REL_TOL: f64 = 1e-9;
const GRADIENT_DIRECTIONS: usize = 10;
const GRADIENT_STEPS: [f64; 6] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
/// The gradient verdict is taken at this step.
const GRADIENT_STEP: f64 = 1e-5;
const GRADIENT_TOL: f64 = 1e-6;
const PONTRYAGIN_REL_TOL: f64 = 1e-6;

pub struct Context<'a> {
    pub experiment: &'a Experiment,
    pub out: &'a OutDir,
    pub seed: u64,
}

impl Context<'_> {
    fn reduced(&self) -> Result<ReducedProblem<'_>> {
        Ok(ReducedProblem::new(&self.experiment.spec, self.experiment.state)?)
    }

    fn write_evaluation(&self, ev: &Evaluation) -> Result<()> {
        self.out.field("control.csv", &ev.u)?;
        self.out.field("state.csv", &ev.y)?;
        self.out.field("adjoint.csv", &ev.phi)?;
        self.out.field("gradient.csv", &ev.d)
    }

    /// Runs the optimizer and writes its outputs; `None` when it did not
    /// converge.
    fn optimize(&self) -> Result<(Option<Evaluation>, OptimizeSummary)> {
        let reduced = self.reduced()?;
        let e = self.experiment;
        let (ev, report) = reduced.projected_gradient(&e.control, &e.optimizer)?;
        self.write_evaluation(&ev)?;
        let rows: Vec<Vec<String>> = report
            .objective_trace
            .iter()
            .enumerate()
            .map(|(k, j)| {
                let step = if k == 0 { String::new() } else { num(report.step_trace[k - 1]) };
                vec![k.to_string(), num(*j), step]
            })
            .collect();
        self.out.table("trace.csv", &["iteration", "objective", "step"], &rows)?;
        let message = match report.termination {
            Termination::Converged => format!(
                "converged after {} iterations: stationarity residual {:e} <= {:e}",
                report.iterations, report.foc_residual, e.optimizer.tol
            ),
            Termination::MaxIterations => format!(
                "stopped at max_iter = {}: stationarity residual {:e} > tol {:e}",
                e.optimizer.max_iter, report.foc_residual, e.optimizer.tol
            ),
            Termination::LineSearchFailed => format!(
                "line search failed after {} iterations: stationarity residual {:e} > tol {:e}",
                report.iterations, report.foc_residual, e.optimizer.tol
            ),
        };
        let summary = OptimizeSummary {
            objective: ev.value,
            pontryagin_gap: pontryagin_gap(e.spec.bounds(), e.spec.nu(), &ev.u, &ev.phi),
            converged: report.converged(),
            message,
            report,
        };
        Ok((summary.converged.then_some(ev), summary))
    }

    /// Smoothed Gaussian directions, normalized in L².
    fn directions(&self, count: usize) -> Result<Vec<GridFunction>> {
        let mesh = self.experiment.spec.mesh();
        let neighbors = mesh.neighbors();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..count)
            .map(|_| {
                let raw: Vec<f64> = (0..mesh.num_nodes()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let smooth = neighbors
                    .iter()
                    .enumerate()
                    .map(|(k, nb)| (raw[k] + nb.iter().map(|&j| raw[j]).sum::<f64>()) / (1 + nb.len()) as f64)
                    .collect();
                let h = GridFunction::new(mesh.clone(), smooth)?;
                Ok(h.scale(1.0 / l2_norm(&h)))
            })
            .collect()
    }
}

#[derive(Serialize)]
struct OptimizeSummary {
    objective: f64,
    pontryagin_gap: f64,
    converged: bool,
    message: String,
    report: OptimizeReport,
}

pub fn solve(ctx: &Context) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report {
        command: &'static str,
        state_solve: SolveReport,
        state_norms: Norms,
        state_range: [f64; 2],
        objective: Option<f64>,
    }
    let e = ctx.experiment;
    let (y, state_solve) = solve_state(&e.spec, &e.control, &e.state, None)?;
    ctx.out.field("control.csv", &e.control)?;
    ctx.out.field("state.csv", &y)?;
    let converged = state_solve.converged;
    let objective = converged.then(|| ctx.reduced().and_then(|r| Ok(r.objective(&e.control)?))).transpose()?;
    ctx.out.json(
        "report.json",
        &Report { command: "solve", state_norms: norms(&y), state_range: [y.min(), y.max()], objective, state_solve },
    )?;
    if converged {
        Ok(Outcome::Pass)
    } else {
        log::error!("state solver did not converge");
        Ok(Outcome::Failed)
    }
}

pub fn optimize(ctx: &Context) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report {
        command: &'static str,
        #[serde(flatten)]
        summary: OptimizeSummary,
    }
    let (ev, summary) = ctx.optimize()?;
    if ev.is_none() {
        log::error!("{}", summary.message);
    }
    ctx.out.json("report.json", &Report { command: "optimize", summary })?;
    Ok(if ev.is_some() { Outcome::Pass } else { Outcome::Failed })
}

pub fn check_foc(ctx: &Context) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report {
        command: &'static str,
        objective: f64,
        foc_residual: f64,
        foc_tol: f64,
        pontryagin_gap: f64,
        hamiltonian_scale: f64,
        pontryagin_tol: f64,
        verdict: bool,
    }
    let e = ctx.experiment;
    let ev = ctx.reduced()?.evaluate(&e.control, None)?;
    ctx.write_evaluation(&ev)?;
    let bounds = e.spec.bounds();
    let gaps = GridFunction::new(e.spec.mesh().clone(), pontryagin_gaps(bounds, e.spec.nu(), &ev.u, &ev.phi))?;
    ctx.out.field("pontryagin_gap.csv", &gaps)?;
    let foc_residual = pcq_core::reduced::fixed_point_residual(bounds, &ev.u, &ev.d);
    let scale = hamiltonian_scale(bounds, e.spec.nu(), &ev.phi);
    let gap = gaps.max();
    let verdict = foc_residual <= e.soc.foc_tol && gap <= PONTRYAGIN_REL_TOL * scale;
    ctx.out.json(
        "report.json",
        &Report {
            command: "check-foc",
            objective: ev.value,
            foc_residual,
            foc_tol: e.soc.foc_tol,
            pontryagin_gap: gap,
            hamiltonian_scale: scale,
            pontryagin_tol: PONTRYAGIN_REL_TOL * scale,
            verdict,
        },
    )?;
    Ok(if verdict { Outcome::Pass } else { Outcome::VerdictFalse })
}

fn write_sigma(out: &OutDir, sigma: &SigmaEstimate) -> Result<()> {
    let rows: Vec<Vec<String>> = sigma
        .table
        .iter()
        .map(|row| vec![num(row.r), num(row.value), row.admissible.to_string()])
        .collect();
    out.table("sigma.csv", &["r", "value", "admissible"], &rows)
}

pub fn check_soc(ctx: &Context) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report {
        command: &'static str,
        optimize: OptimizeSummary,
        curvature: Option<CurvatureReport>,
    }
    let (ev, optimize) = ctx.optimize()?;
    let Some(ev) = ev else {
        log::error!("{}", optimize.message);
        ctx.out.json("report.json", &Report { command: "check-soc", optimize, curvature: None })?;
        return Ok(Outcome::Failed);
    };
    let reduced = ctx.reduced()?;
    let triple = StationaryTriple::from(ev);
    let curvature = soc_report(&reduced, &triple, &ctx.experiment.soc)?;
    let rows: Vec<Vec<String>> = curvature
        .directions
        .iter()
        .map(|d| {
            vec![
                d.index.to_string(),
                num(d.q_s),
                num(d.q_1),
                num(d.q_2.value),
                num(d.total),
                num(d.z_inf),
                num(d.q2_bound),
            ]
        })
        .collect();
    ctx.out.table("directions.csv", &["direction", "q_s", "q_1", "q_2", "total", "z_inf", "q2_bound"], &rows)?;
    let rows: Vec<Vec<String>> = curvature
        .directions
        .iter()
        .flat_map(|d| {
            d.q_2.table.iter().map(|row| {
                vec![d.index.to_string(), num(row.offset), row.n.to_string(), num(row.s), num(row.q)]
            })
        })
        .collect();
    ctx.out.table("q_tilde.csv", &["direction", "offset", "n", "s_n", "q_n"], &rows)?;
    write_sigma(ctx.out, &curvature.sigma)?;
    let verdict = curvature.snc_ok;
    log::info!("{}", curvature.message);
    ctx.out.json("report.json", &Report { command: "check-soc", optimize, curvature: Some(curvature) })?;
    Ok(if verdict { Outcome::Pass } else { Outcome::VerdictFalse })
}

pub fn sigma(ctx: &Context) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Report {
        command: &'static str,
        state_solve: SolveReport,
        sigma: SigmaEstimate,
    }
    let e = ctx.experiment;
    let (y, state_solve) = solve_state(&e.spec, &e.control, &e.state, None)?;
    ctx.out.field("state.csv", &y)?;
    if !state_solve.converged {
        log::error!("state solver did not converge");
        return Ok(Outcome::Failed);
    }
    let sigma = sigma_functional(e.spec.coefficient(), &y, &e.soc, e.spec.execution());
    write_sigma(ctx.out, &sigma)?;
    let resolved = sigma.resolved;
    ctx.out.json("report.json", &Report { command: "sigma", state_solve, sigma })?;
    Ok(if resolved { Outcome::Pass } else { Outcome::VerdictFalse })
}

pub fn taylor_check(ctx: &Context) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Row {
        direction: usize,
        size: f64,
        #[serde(flatten)]
        terms: TaylorTerms,
        tolerance: f64,
    }
    #[derive(Serialize)]
    struct Report {
        command: &'static str,
        optimize: OptimizeSummary,
        rows: Vec<Row>,
        verdict: bool,
    }
    let (ev, optimize) = ctx.optimize()?;
    let Some(ev) = ev else {
        log::error!("{}", optimize.message);
        ctx.out.json("report.json", &Report { command: "taylor-check", optimize, rows: vec![], verdict: false })?;
        return Ok(Outcome::Failed);
    };
    let reduced = ctx.reduced()?;
    let triple = StationaryTriple::from(ev);
    let abs_tol = 10.0 * ctx.experiment.state.tol;
    let mut rows = Vec::new();
    for (direction, h) in ctx.directions(TAYLOR_DIRECTIONS)?.iter().enumerate() {
        for size in TAYLOR_SIZES {
            let terms = taylor_residual(&reduced, &triple, &triple.u.add_scaled(size, h))?;
            let tolerance = abs_tol + TAYLOR_REL_TOL * terms.scale;
            rows.push(Row { direction, size, terms, tolerance });
        }
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.direction.to_string(),
                num(r.size),
                num(r.terms.lhs),
                num(r.terms.rhs),
                num(r.terms.residual),
                num(r.terms.scale),
            ]
        })
        .collect();
    ctx.out.table("taylor.csv", &["direction", "size", "lhs", "rhs", "residual", "scale"], &table)?;
    let verdict = rows.iter().all(|r| r.terms.residual <= r.tolerance);
    ctx.out.json("report.json", &Report { command: "taylor-check", optimize, rows, verdict })?;
    Ok(if verdict { Outcome::Pass } else { Outcome::VerdictFalse })
}

pub fn gradient_check(ctx: &Context) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Row {
        direction: usize,
        step: f64,
        finite_difference: f64,
        adjoint: f64,
        relative_error: f64,
    }
    #[derive(Serialize)]
    struct Report {
        command: &'static str,
        objective: f64,
        step: f64,
        tolerance: f64,
        worst_relative_error: f64,
        rows: Vec<Row>,
        verdict: bool,
    }
    let e = ctx.experiment;
    let reduced = ctx.reduced()?;
    let ev = reduced.evaluate(&e.control, None)?;
    ctx.write_evaluation(&ev)?;
    let floor = 1e-12 * ev.value.abs().max(1.0);
    let mut rows = Vec::new();
    for (direction, h) in ctx.directions(GRADIENT_DIRECTIONS)?.iter().enumerate() {
        let adjoint = inner_l2(&ev.d, h)?;
        for step in GRADIENT_STEPS {
            let plus = reduced.objective_warm(&ev.u.add_scaled(step, h), &ev.y)?;
            let minus = reduced.objective_warm(&ev.u.add_scaled(-step, h), &ev.y)?;
            let finite_difference = (plus - minus) / (2.0 * step);
            let relative_error = (finite_difference - adjoint).abs() / adjoint.abs().max(floor);
            rows.push(Row { direction, step, finite_difference, adjoint, relative_error });
        }
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.direction.to_string(),
                num(r.step),
                num(r.finite_difference),
                num(r.adjoint),
                num(r.relative_error),
            ]
        })
        .collect();
    ctx.out.table("gradient_check.csv", &["direction", "step", "finite_difference", "adjoint", "relative_error"], &table)?;
    let worst = rows
        .iter()
        .filter(|r| r.step == GRADIENT_STEP)
        .map(|r| r.relative_error)
        .fold(0.0, f64::max);
    let verdict = worst <= GRADIENT_TOL;
    ctx.out.json(
        "report.json",
        &Report {
            command: "gradient-check",
            objective: ev.value,
            step: GRADIENT_STEP,
            tolerance: GRADIENT_TOL,
            worst_relative_error: worst,
            rows,
            verdict,
        },
    )?;
    Ok(if verdict { Outcome::Pass } else { Outcome::VerdictFalse })
}
