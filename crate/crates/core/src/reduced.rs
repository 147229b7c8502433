//! Reduced objective `j(u) = G(S(u)) + ν/2‖u‖²`, its adjoint gradient, a
//! projected-gradient optimizer and first-order diagnostics.

use serde::{Deserialize, Serialize};

use crate::discretization::{inner_l2, l2_norm, GridFunction};
use crate::error::{Error, Result};
use crate::problem::{BoxBounds, Objective, ProblemSpec};
use crate::solvers::{solve_state, LinearizedSystem, SolveReport, StateSolveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// Stop once the projected-gradient residual is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500, armijo: 1e-4, backtrack: 0.5, max_backtracks: 40 }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("optimizer.tol must be > 0, got {}", self.tol)));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidConfig("optimizer.armijo must lie in (0, 1)".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidConfig("optimizer.backtrack must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub foc_residual: f64,
    pub step_trace: Vec<f64>,
    /// `c·τ·(d, u_k − u_{k+1})` of every accepted step.
    pub predicted_decrease: Vec<f64>,
    pub termination: Termination,
}

impl OptimizeReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Relative rounding level of `j` below which the line search compares
/// stationarity residuals instead of objective values.
pub const ROUNDOFF: f64 = 16.0 * f64::EPSILON;

/// State, adjoint and gradient at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub u: GridFunction,
    pub y: GridFunction,
    pub phi: GridFunction,
    /// `d = φ + ν u`
    pub d: GridFunction,
    pub value: f64,
    pub state_report: SolveReport,
    pub system: LinearizedSystem,
}

/// The reduced problem: problem data plus the state-solver settings used by
/// every evaluation.
#[derive(Debug, Clone)]
pub struct ReducedProblem<'a, O = crate::problem::TrackingObjective> {
    spec: &'a ProblemSpec<O>,
    state: StateSolveConfig,
}

impl<'a, O: Objective> ReducedProblem<'a, O> {
    pub fn new(spec: &'a ProblemSpec<O>, state: StateSolveConfig) -> Result<Self> {
        state.validate()?;
        Ok(Self { spec, state })
    }

    pub fn spec(&self) -> &'a ProblemSpec<O> {
        self.spec
    }
    pub fn state_config(&self) -> &StateSolveConfig {
        &self.state
    }

    /// `S(u)`; fails when the state solver does not converge.
    pub fn state_of(&self, u: &GridFunction, initial: Option<&GridFunction>) -> Result<(GridFunction, SolveReport)> {
        let (y, report) = solve_state(self.spec, u, &self.state, initial)?;
        if !report.converged {
            return Err(Error::StateNotConverged(format!(
                "{:?} stopped after {} iterations with increment {:.3e}",
                report.method, report.iterations, report.increment
            )));
        }
        Ok((y, report))
    }

    fn value_at(&self, u: &GridFunction, y: &GridFunction) -> f64 {
        self.spec.objective().value(y) + 0.5 * self.spec.nu() * l2_norm(u).powi(2)
    }

    pub fn objective(&self, u: &GridFunction) -> Result<f64> {
        let (y, _) = self.state_of(u, None)?;
        Ok(self.value_at(u, &y))
    }

    pub fn objective_warm(&self, u: &GridFunction, initial: &GridFunction) -> Result<f64> {
        let (y, _) = self.state_of(u, Some(initial))?;
        Ok(self.value_at(u, &y))
    }

    pub fn evaluate(&self, u: &GridFunction, initial: Option<&GridFunction>) -> Result<Evaluation> {
        let (y, state_report) = self.state_of(u, initial)?;
        let system = LinearizedSystem::new(self.spec, &y)?;
        let phi = system.solve_adjoint(&self.spec.objective().derivative(&y));
        let d = phi.add_scaled(self.spec.nu(), u);
        Ok(Evaluation {
            value: self.value_at(u, &y),
            u: u.clone(),
            y,
            phi,
            d,
            state_report,
            system,
        })
    }

    /// L²-Riesz representative `φ_u + ν u` of `j'(u)`.
    pub fn gradient_field(&self, u: &GridFunction) -> Result<GridFunction> {
        Ok(self.evaluate(u, None)?.d)
    }

    pub fn foc_residual(&self, u: &GridFunction) -> Result<f64> {
        let d = self.gradient_field(u)?;
        Ok(fixed_point_residual(self.spec.bounds(), u, &d))
    }

    pub fn pontryagin_gap(&self, u: &GridFunction) -> Result<f64> {
        let ev = self.evaluate(u, None)?;
        Ok(pontryagin_gap(self.spec.bounds(), self.spec.nu(), u, &ev.phi))
    }

    /// Projected gradient with Armijo backtracking on the exact reduced
    /// objective. Each iteration starts from the step `1/ν`, for which the
    /// trial point is `P(−φ/ν)`.
    pub fn projected_gradient(
        &self,
        u0: &GridFunction,
        cfg: &OptimizeConfig,
    ) -> Result<(Evaluation, OptimizeReport)> {
        cfg.validate()?;
        let bounds = self.spec.bounds();
        let tau0 = 1.0 / self.spec.nu();
        let mut ev = self.evaluate(&bounds.project(u0), None)?;
        let mut objective_trace = vec![ev.value];
        let mut step_trace = Vec::new();
        let mut predicted_decrease = Vec::new();
        let mut residual = fixed_point_residual(bounds, &ev.u, &ev.d);
        let mut termination = Termination::MaxIterations;
        for k in 0..=cfg.max_iter {
            if residual <= cfg.tol {
                termination = Termination::Converged;
                break;
            }
            if k == cfg.max_iter {
                break;
            }
            let mut tau = tau0;
            let mut accepted = None;
            for _ in 0..=cfg.max_backtracks {
                let cand = bounds.project(&ev.u.add_scaled(-tau, &ev.d));
                let decrease = inner_l2(&ev.d, &ev.u.add_scaled(-1.0, &cand))?;
                let trial = self.evaluate(&cand, Some(&ev.y))?;
                let predicted = cfg.armijo * tau * decrease;
                let noise = ROUNDOFF * ev.value.abs().max(f64::MIN_POSITIVE);
                // Once the predicted decrease is below the rounding level of
                // j, the comparison of objective values is meaningless; require
                // the stationarity residual to shrink instead.
                let accept = if predicted > noise {
                    trial.value <= ev.value - predicted
                } else {
                    trial.value <= ev.value + noise
                        && fixed_point_residual(bounds, &trial.u, &trial.d) < residual
                };
                if accept {
                    predicted_decrease.push(predicted);
                    accepted = Some(trial);
                    break;
                }
                tau *= cfg.backtrack;
            }
            let Some(next) = accepted else {
                termination = Termination::LineSearchFailed;
                log::warn!("line search failed after {} backtracks", cfg.max_backtracks);
                break;
            };
            ev = next;
            residual = fixed_point_residual(bounds, &ev.u, &ev.d);
            objective_trace.push(ev.value);
            step_trace.push(tau);
            log::info!(
                "iteration {}: j = {:.12e}, foc residual = {residual:.3e}, step = {tau:.3e}",
                step_trace.len(),
                ev.value
            );
        }
        let report = OptimizeReport {
            iterations: step_trace.len(),
            objective_trace,
            foc_residual: residual,
            step_trace,
            predicted_decrease,
            termination,
        };
        Ok((ev, report))
    }
}

/// `‖u − P(u − d)‖` in L².
pub fn fixed_point_residual(bounds: &BoxBounds, u: &GridFunction, d: &GridFunction) -> f64 {
    l2_norm(&u.add_scaled(-1.0, &bounds.project(&u.add_scaled(-1.0, d))))
}

/// Nodewise Hamiltonian gap `H(u) − min_{α≤s≤β} H(s)` with
/// `H(s) = ν/2 s² + φ s`; the tracking integrand cancels.
pub fn pontryagin_gaps(bounds: &BoxBounds, nu: f64, u: &GridFunction, phi: &GridFunction) -> Vec<f64> {
    let h = |s: f64, p: f64| 0.5 * nu * s * s + p * s;
    u.values()
        .iter()
        .zip(phi.values())
        .zip(bounds.alpha().values().iter().zip(bounds.beta().values()))
        .map(|((&uk, &pk), (&lo, &hi))| {
            let s = (-pk / nu).clamp(lo, hi);
            (h(uk, pk) - h(s, pk)).max(0.0)
        })
        .collect()
}

pub fn pontryagin_gap(bounds: &BoxBounds, nu: f64, u: &GridFunction, phi: &GridFunction) -> f64 {
    pontryagin_gaps(bounds, nu, u, phi).into_iter().fold(0.0, f64::max)
}

/// Largest magnitude of the pointwise Hamiltonian over the admissible
/// interval, the natural unit for Pontryagin gaps.
pub fn hamiltonian_scale(bounds: &BoxBounds, nu: f64, phi: &GridFunction) -> f64 {
    phi.values()
        .iter()
        .zip(bounds.alpha().values().iter().zip(bounds.beta().values()))
        .map(|(&p, (&lo, &hi))| {
            let m = lo.abs().max(hi.abs());
            0.5 * nu * m * m + p.abs() * m
        })
        .fold(f64::MIN_POSITIVE, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Mesh;
    use crate::pc2::Pc2Coefficient;
    use crate::problem::TrackingObjective;

    #[test]
    fn pontryagin_minimizer_matches_scan() {
        let m = Mesh::interval(0.0, 1.0, 4).unwrap();
        let bounds = BoxBounds::constant(&m, -1.0, 2.0).unwrap();
        let nu = 0.3;
        for &p in &[-1.0_f64, -0.2, 0.0, 0.1, 0.9] {
            let s_star = (-p / nu).clamp(-1.0, 2.0);
            let h = |s: f64| 0.5 * nu * s * s + p * s;
            let scan = (0..=1000)
                .map(|i| -1.0 + 3.0 * i as f64 / 1000.0)
                .fold(f64::INFINITY, |m, s| m.min(h(s)));
            assert!(h(s_star) <= scan + 1e-15);
            assert!(scan - h(s_star) < 1e-5);
            let u = GridFunction::constant(&m, s_star);
            let phi = GridFunction::constant(&m, p);
            assert_eq!(pontryagin_gap(&bounds, nu, &u, &phi), 0.0);
            let shifted = if s_star < 1.5 { s_star + 0.5 } else { s_star - 0.5 };
            let off = GridFunction::constant(&m, shifted);
            assert!(pontryagin_gap(&bounds, nu, &off, &phi) > 0.0);
        }
    }

    #[test]
    fn zero_target_state_is_optimal_at_zero() {
        let m = Mesh::interval(0.0, 1.0, 16).unwrap();
        let spec = ProblemSpec::new(
            GridFunction::constant(&m, 1.0),
            Pc2Coefficient::abs_shifted(0.0).unwrap(),
            1e-2,
            BoxBounds::constant(&m, -1.0, 1.0).unwrap(),
            TrackingObjective::new(GridFunction::zeros(&m)),
        )
        .unwrap();
        let red = ReducedProblem::new(&spec, StateSolveConfig::default()).unwrap();
        let zero = GridFunction::zeros(&m);
        assert_eq!(red.objective(&zero).unwrap(), 0.0);
        assert_eq!(red.gradient_field(&zero).unwrap().max_abs(), 0.0);
        let (ev, rep) = red.projected_gradient(&zero, &OptimizeConfig::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged());
        assert_eq!(ev.u.max_abs(), 0.0);
    }
}
