//! Problem data: mesh, diffusion coefficients, control bounds and objective.

use std::sync::Arc;

use crate::discretization::{inner_l2, l2_norm, max_gradient, GridFunction, Mesh};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pc2::Pc2Coefficient;

/// Nodal box constraints `alpha ≤ u ≤ beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    alpha: GridFunction,
    beta: GridFunction,
    gamma: f64,
}

impl BoxBounds {
    /// Requires `beta - alpha ≥ gamma > 0` at every node; `gamma` is taken as
    /// the smallest nodal gap.
    pub fn new(alpha: GridFunction, beta: GridFunction) -> Result<Self> {
        alpha.check_same_mesh(&beta)?;
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidProblem("control bounds must be finite".into()));
        }
        let gamma = beta
            .values()
            .iter()
            .zip(alpha.values())
            .map(|(b, a)| b - a)
            .fold(f64::INFINITY, f64::min);
        if !(gamma > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "control bounds need beta - alpha > 0 everywhere (min gap {gamma})"
            )));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn constant(mesh: &Arc<Mesh>, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(GridFunction::constant(mesh, alpha), GridFunction::constant(mesh, beta))
    }

    pub fn alpha(&self) -> &GridFunction {
        &self.alpha
    }
    pub fn beta(&self) -> &GridFunction {
        &self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Nodewise `median(alpha, v, beta)`.
    pub fn project(&self, v: &GridFunction) -> GridFunction {
        let values = v
            .values()
            .iter()
            .zip(self.alpha.values().iter().zip(self.beta.values()))
            .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
            .collect();
        GridFunction::new(v.mesh().clone(), values).expect("same mesh")
    }

    pub fn contains(&self, v: &GridFunction) -> bool {
        v.values()
            .iter()
            .zip(self.alpha.values().iter().zip(self.beta.values()))
            .all(|(&x, (&lo, &hi))| lo <= x && x <= hi)
    }
}

/// A twice differentiable objective `G(y)`. Derivatives are returned as
/// L²-Riesz representatives with respect to [`inner_l2`].
pub trait Objective: Send + Sync {
    fn value(&self, y: &GridFunction) -> f64;
    /// Field `g` with `G'(y)z = inner_l2(g, z)`.
    fn derivative(&self, y: &GridFunction) -> GridFunction;
    fn second(&self, y: &GridFunction, z1: &GridFunction, z2: &GridFunction) -> f64;

    /// `∫₀¹ (1-s) G''(ȳ + s(y-ȳ))(y-ȳ, y-ȳ) ds`, by 16-point Gauss–Legendre
    /// unless overridden with a closed form.
    fn taylor_remainder(&self, y_bar: &GridFunction, y: &GridFunction) -> f64 {
        let w = y.add_scaled(-1.0, y_bar);
        gauss_legendre(16)
            .into_iter()
            .map(|(s, wt)| {
                let ys = y_bar.add_scaled(s, &w);
                wt * (1.0 - s) * self.second(&ys, &w, &w)
            })
            .sum()
    }
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

/// `G(y) = ½‖y − y_d‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingObjective {
    y_d: GridFunction,
}

impl TrackingObjective {
    pub fn new(y_d: GridFunction) -> Self {
        Self { y_d }
    }
    pub fn target(&self) -> &GridFunction {
        &self.y_d
    }
}

impl Objective for TrackingObjective {
    fn value(&self, y: &GridFunction) -> f64 {
        0.5 * l2_norm(&y.add_scaled(-1.0, &self.y_d)).powi(2)
    }

    fn derivative(&self, y: &GridFunction) -> GridFunction {
        y.add_scaled(-1.0, &self.y_d)
    }

    fn second(&self, _y: &GridFunction, z1: &GridFunction, z2: &GridFunction) -> f64 {
        inner_l2(z1, z2).expect("same mesh")
    }

    fn taylor_remainder(&self, y_bar: &GridFunction, y: &GridFunction) -> f64 {
        0.5 * l2_norm(&y.add_scaled(-1.0, y_bar)).powi(2)
    }
}

/// Data of the optimal control problem
///
/// ```text
/// min G(y) + ν/2 ‖u‖²   s.t.  −div[(b + a(y))∇y] = u,  y = 0 on ∂Ω,  α ≤ u ≤ β.
/// ```
#[derive(Debug, Clone)]
pub struct ProblemSpec<O = TrackingObjective> {
    mesh: Arc<Mesh>,
    b: GridFunction,
    b_floor: f64,
    b_lipschitz: f64,
    coefficient: Pc2Coefficient,
    nu: f64,
    bounds: BoxBounds,
    objective: O,
    execution: Execution,
}

impl<O: Objective> ProblemSpec<O> {
    pub fn new(
        b: GridFunction,
        coefficient: Pc2Coefficient,
        nu: f64,
        bounds: BoxBounds,
        objective: O,
    ) -> Result<Self> {
        let mesh = b.mesh().clone();
        b.check_same_mesh(bounds.alpha())?;
        if !b.is_finite() {
            return Err(Error::InvalidProblem("b must be finite".into()));
        }
        let b_floor = b.min();
        if !(b_floor > 0.0) {
            return Err(Error::InvalidProblem(format!("b must be positive, min is {b_floor}")));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidProblem(format!("nu must be positive, got {nu}")));
        }
        let b_lipschitz = max_gradient(&b);
        Ok(Self {
            mesh,
            b,
            b_floor,
            b_lipschitz,
            coefficient,
            nu,
            bounds,
            objective,
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidProblem(format!("nu must be positive, got {nu}")));
        }
        self.nu = nu;
        Ok(self)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn b(&self) -> &GridFunction {
        &self.b
    }
    /// Nodal minimum of `b`, which is the minimum over the domain for P1 data.
    pub fn b_floor(&self) -> f64 {
        self.b_floor
    }
    /// Largest element gradient of `b`.
    pub fn b_lipschitz(&self) -> f64 {
        self.b_lipschitz
    }
    pub fn coefficient(&self) -> &Pc2Coefficient {
        &self.coefficient
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }
    pub fn objective(&self) -> &O {
        &self.objective
    }
    pub fn execution(&self) -> Execution {
        self.execution
    }
}
