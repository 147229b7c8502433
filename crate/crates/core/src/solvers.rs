//! State, linearized-state and adjoint solvers.
//!
//! All integrals involving `a(y)` are evaluated on elements cut along the
//! level sets `{y = t_i}`, so the discrete state equation is the exact
//! Galerkin equation of its P1 state and the linearized operator is its exact
//! Jacobian. The adjoint is solved with the transposed factors of the
//! linearized operator.

use serde::{Deserialize, Serialize};

use crate::discretization::{
    assemble_operator, element_gradient, element_points, h1_seminorm, interpolate, local_values,
    lumped_load, solve_dirichlet, ElementForm, FactoredOperator, FormCoefficients, GridFunction,
    LevelCut, Mesh, PointwiseForm, SparseOperator,
};
use crate::error::{Error, Result};
use crate::pc2::Pc2Coefficient;
use crate::problem::{Objective, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StateMethod {
    #[default]
    Picard,
    Kirchhoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateSolveConfig {
    /// Stop once the H¹ seminorm of the increment is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial relaxation factor in (0, 1]; halved whenever the increment grows.
    pub damping: f64,
    pub method: StateMethod,
}

impl Default for StateSolveConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 500, damping: 1.0, method: StateMethod::Picard }
    }
}

impl StateSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("state_solver.tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("state_solver.max_iter must be ≥ 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "state_solver.damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }

    pub fn with_method(mut self, method: StateMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: StateMethod,
    pub iterations: usize,
    /// H¹ seminorm of the last increment.
    pub increment: f64,
    /// Dual norm of the nonlinear residual `A(y)y − M u`.
    pub residual: f64,
    pub converged: bool,
    pub increments: Vec<f64>,
}

const MIN_DAMPING: f64 = 1.0 / 1024.0;

/// Frozen-coefficient form `∫ (b + a(y)) ∇w·∇v`, optionally with the
/// linearization term `∫ 1{y∉E} a'(y) w ∇y·∇v`.
struct StateForm<'a> {
    b: &'a GridFunction,
    coef: &'a Pc2Coefficient,
    y: &'a GridFunction,
    grad_y: Option<Vec<[f64; 2]>>,
}

impl FormCoefficients for StateForm<'_> {
    fn element(&self, mesh: &Mesh, e: usize) -> ElementForm {
        let nv = mesh.nverts();
        let yl = local_values(mesh, e, self.y.values());
        let bl = local_values(mesh, e, self.b.values());
        let points =
            element_points(mesh, e, &[LevelCut { values: yl, levels: self.coef.breakpoints() }]);
        let mut kappa = Vec::with_capacity(points.len());
        let mut conv = self.grad_y.as_ref().map(|_| Vec::with_capacity(points.len()));
        for q in &points {
            let y = interpolate(&yl, nv, &q.bary);
            kappa.push(interpolate(&bl, nv, &q.bary) + self.coef.eval(y));
            if let (Some(c), Some(g)) = (conv.as_mut(), self.grad_y.as_ref()) {
                let d = self.coef.deriv_off_exceptional(y);
                c.push([d * g[e][0], d * g[e][1]]);
            }
        }
        ElementForm { points, kappa, conv_div: conv, conv_grad: None }
    }
}

/// Matrix of `w ↦ −div[(b + a(y))∇w]` with `y` frozen.
pub fn frozen_operator<O: Objective>(spec: &ProblemSpec<O>, y: &GridFunction) -> Result<SparseOperator> {
    let form = StateForm { b: spec.b(), coef: spec.coefficient(), y, grad_y: None };
    assemble_operator(spec.mesh(), &form, spec.execution())
}

/// Matrix of the linearized operator `z ↦ −div[(b + a(y))∇z + 1{y∉E} a'(y) z ∇y]`.
pub fn linearized_operator<O: Objective>(
    spec: &ProblemSpec<O>,
    y: &GridFunction,
) -> Result<SparseOperator> {
    let form = StateForm {
        b: spec.b(),
        coef: spec.coefficient(),
        y,
        grad_y: Some(element_gradient(y)),
    };
    assemble_operator(spec.mesh(), &form, spec.execution())
}

fn laplacian(mesh: &std::sync::Arc<Mesh>, spec_exec: crate::Execution) -> Result<SparseOperator> {
    assemble_operator(mesh, &PointwiseForm::diffusion(|_| 1.0), spec_exec)
}

/// `‖A(y)y − M u‖` in the dual norm induced by the Dirichlet Laplacian.
pub fn state_residual<O: Objective>(
    spec: &ProblemSpec<O>,
    y: &GridFunction,
    u: &GridFunction,
) -> Result<f64> {
    let mesh = spec.mesh();
    let op = frozen_operator(spec, y)?;
    let ay = op.apply(y);
    let load = lumped_load(u);
    let r: Vec<f64> =
        mesh.free_nodes().iter().zip(&ay).map(|(&k, &a)| a - load[k]).collect();
    let lap = laplacian(mesh, spec.execution())?.factor()?;
    let w = lap.solve_free(&r);
    Ok(r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

fn check_control<O: Objective>(spec: &ProblemSpec<O>, u: &GridFunction) -> Result<()> {
    if !(std::sync::Arc::ptr_eq(u.mesh(), spec.mesh()) || **u.mesh() == **spec.mesh()) {
        return Err(Error::MeshMismatch);
    }
    if !u.is_finite() {
        return Err(Error::InvalidProblem("control has non-finite values".into()));
    }
    Ok(())
}

/// Solves the state equation with the method selected in `cfg`.
pub fn solve_state<O: Objective>(
    spec: &ProblemSpec<O>,
    u: &GridFunction,
    cfg: &StateSolveConfig,
    initial: Option<&GridFunction>,
) -> Result<(GridFunction, SolveReport)> {
    match cfg.method {
        StateMethod::Picard => solve_state_picard(spec, u, cfg, initial),
        StateMethod::Kirchhoff => solve_state_kirchhoff(spec, u, cfg, initial),
    }
}

/// Frozen-coefficient fixed point `A(y^k) ŷ = M u`, `y^{k+1} = y^k + ω(ŷ − y^k)`.
pub fn solve_state_picard<O: Objective>(
    spec: &ProblemSpec<O>,
    u: &GridFunction,
    cfg: &StateSolveConfig,
    initial: Option<&GridFunction>,
) -> Result<(GridFunction, SolveReport)> {
    cfg.validate()?;
    check_control(spec, u)?;
    let load = lumped_load(u);
    let mut y = match initial {
        Some(y0) => GridFunction::from_free(spec.mesh(), &y0.free_values()),
        None => GridFunction::zeros(spec.mesh()),
    };
    fixed_point(spec, u, cfg, StateMethod::Picard, &mut y, |y| {
        let op = frozen_operator(spec, y)?;
        solve_dirichlet(&op, &load, None)
    })
}

fn fixed_point<O: Objective>(
    spec: &ProblemSpec<O>,
    u: &GridFunction,
    cfg: &StateSolveConfig,
    method: StateMethod,
    y: &mut GridFunction,
    mut step: impl FnMut(&GridFunction) -> Result<GridFunction>,
) -> Result<(GridFunction, SolveReport)> {
    let mut omega = cfg.damping;
    let mut prev = f64::INFINITY;
    let mut increments = Vec::new();
    let mut converged = false;
    for k in 1..=cfg.max_iter {
        let target = step(y)?;
        let delta = target.add_scaled(-1.0, y);
        let full = h1_seminorm(&delta);
        if !full.is_finite() {
            return Err(Error::StateNotConverged(format!("{method:?} iteration diverged")));
        }
        if full > prev && omega > MIN_DAMPING {
            omega *= 0.5;
            log::debug!("{method:?}: increment grew, damping now {omega}");
        }
        prev = full;
        *y = if omega == 1.0 { target } else { y.add_scaled(omega, &delta) };
        let inc = omega * full;
        increments.push(inc);
        log::debug!("{method:?} iteration {k}: increment {inc:.3e}");
        if inc <= cfg.tol {
            converged = true;
            break;
        }
    }
    let residual = state_residual(spec, y, u)?;
    let report = SolveReport {
        method,
        iterations: increments.len(),
        increment: *increments.last().unwrap_or(&0.0),
        residual,
        converged,
        increments,
    };
    if !converged {
        log::warn!(
            "{method:?} did not converge in {} iterations (increment {:.3e})",
            report.iterations,
            report.increment
        );
    }
    Ok((y.clone(), report))
}

/// `K(x, t) = b(x) t + ∫₀ᵗ a` at mesh node `node`.
pub fn kirchhoff_value<O: Objective>(spec: &ProblemSpec<O>, node: usize, t: f64) -> f64 {
    kirchhoff(spec.b().values()[node], spec.coefficient(), t)
}

/// Inverse of `t ↦ K(x, t)` at mesh node `node`.
pub fn kirchhoff_inverse<O: Objective>(spec: &ProblemSpec<O>, node: usize, s: f64) -> f64 {
    invert_kirchhoff(spec.b().values()[node], spec.coefficient(), s)
}

pub fn kirchhoff(b: f64, coef: &Pc2Coefficient, t: f64) -> f64 {
    b * t + coef.antiderivative(t)
}

/// Safeguarded Newton–bisection for `b t + A(t) = s`. The derivative is at
/// least `b > 0` wherever `a ≥ 0`, so Newton steps are taken whenever they
/// stay inside the current bracket.
pub fn invert_kirchhoff(b: f64, coef: &Pc2Coefficient, s: f64) -> f64 {
    let f = |t: f64| kirchhoff(b, coef, t) - s;
    let tol = 1e-15 * s.abs().max(1.0);
    let (mut lo, mut hi) = if s >= 0.0 { (0.0, s / b) } else { (s / b, 0.0) };
    // a may be negative outside its working range; widen until bracketed
    while f(lo) > 0.0 {
        lo = 2.0 * lo - 1.0;
    }
    while f(hi) < 0.0 {
        hi = 2.0 * hi + 1.0;
    }
    let mut t = if s >= 0.0 { hi.min(s / b) } else { lo.max(s / b) };
    for _ in 0..200 {
        let ft = f(t);
        if ft.abs() <= tol {
            return t;
        }
        if ft > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let slope = b + coef.eval(t);
        let newton = t - ft / slope;
        t = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    t
}

/// Fixed point on the Kirchhoff variable `θ = K(x, y)`:
///
/// ```text
/// ∫∇θ^{k+1}·∇v = ∫ u v + ∫ y^k ∇b·∇v + c(y^k; v),    y^{k+1} = T(x, θ^{k+1}) nodewise.
/// ```
///
/// `c(y; v) = ∫∇(I_h K(y))·∇v − ∫ y ∇b·∇v − ∫(b + a(y))∇y·∇v` is the
/// defect between the transformed and the untransformed discrete forms. It
/// vanishes identically in one dimension and is `O(h²)` in two; including it
/// makes the fixed point coincide with the discrete state equation solved by
/// Picard. Every step costs one Laplacian solve, the Laplacian being factored
/// once. Algebraically the load equals `M u − A(y^k) y^k + L I_h K(y^k)`,
/// which is how it is computed.
pub fn solve_state_kirchhoff<O: Objective>(
    spec: &ProblemSpec<O>,
    u: &GridFunction,
    cfg: &StateSolveConfig,
    initial: Option<&GridFunction>,
) -> Result<(GridFunction, SolveReport)> {
    cfg.validate()?;
    check_control(spec, u)?;
    let mesh = spec.mesh().clone();
    let lap_op = laplacian(&mesh, spec.execution())?;
    let lap = lap_op.factor()?;
    let base = lumped_load(u);
    let mut y = match initial {
        Some(y0) => GridFunction::from_free(&mesh, &y0.free_values()),
        None => GridFunction::zeros(&mesh),
    };
    let coef = spec.coefficient();
    let bvals = spec.b().values();
    let step = |y: &GridFunction| -> Result<GridFunction> {
        let k_of_y = GridFunction::new(
            mesh.clone(),
            y.values().iter().zip(bvals).map(|(&t, &b)| kirchhoff(b, coef, t)).collect(),
        )?;
        let ay = frozen_operator(spec, y)?.apply(y);
        let lk = lap_op.apply(&k_of_y);
        let mut load = base.clone();
        for (i, &k) in mesh.free_nodes().iter().enumerate() {
            load[k] += lk[i] - ay[i];
        }
        let theta = lap.solve(&load);
        let mut values = vec![0.0; mesh.num_nodes()];
        for &k in mesh.free_nodes() {
            values[k] = invert_kirchhoff(bvals[k], coef, theta.values()[k]);
        }
        GridFunction::new(mesh.clone(), values)
    };
    fixed_point(spec, u, cfg, StateMethod::Kirchhoff, &mut y, step)
}

/// Factored linearized operator at a base state; serves both the
/// linearized equation and, through the transposed factors, the adjoint.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    factored: FactoredOperator,
}

impl LinearizedSystem {
    pub fn new<O: Objective>(spec: &ProblemSpec<O>, y_base: &GridFunction) -> Result<Self> {
        Ok(Self { factored: linearized_operator(spec, y_base)?.factor()? })
    }

    /// `z = S'(u) v`, with load `M v`.
    pub fn solve(&self, v: &GridFunction) -> GridFunction {
        self.factored.solve(&lumped_load(v))
    }

    /// Adjoint state for the load field `g`: `Aᵀ φ = M g`.
    pub fn solve_adjoint(&self, g: &GridFunction) -> GridFunction {
        self.factored.solve_transpose(&lumped_load(g))
    }

    pub fn operator(&self) -> &SparseOperator {
        self.factored.operator()
    }
}

pub fn solve_linearized<O: Objective>(
    spec: &ProblemSpec<O>,
    y_base: &GridFunction,
    v: &GridFunction,
) -> Result<GridFunction> {
    Ok(LinearizedSystem::new(spec, y_base)?.solve(v))
}

pub fn solve_adjoint<O: Objective>(
    spec: &ProblemSpec<O>,
    y_base: &GridFunction,
    g: &GridFunction,
) -> Result<GridFunction> {
    Ok(LinearizedSystem::new(spec, y_base)?.solve_adjoint(g))
}
