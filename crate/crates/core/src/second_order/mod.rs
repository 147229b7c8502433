//! Second-order analysis at a stationary control: curvature functionals,
//! the jump functional, the exact Taylor identity, critical cones and
//! sampled SNC/SSC verdicts.

mod cone;
mod curvature;
mod report;
mod sigma;
mod taylor;

use serde::{Deserialize, Serialize};

pub use cone::critical_cone_project;
pub use curvature::{Curvature, Q2Estimate, QTildeRow, ZetaField};
pub use report::{soc_report, CurvatureReport, DirectionReport};
pub use sigma::{sigma_functional, SigmaEstimate, SigmaRow};
pub use taylor::{taylor_residual, TaylorTerms};

use crate::discretization::GridFunction;
use crate::error::{Error, Result};
use crate::reduced::Evaluation;
use crate::solvers::LinearizedSystem;

/// Settings of the finite surrogates for the limits in `Q_2` and `Σ`, and
/// of direction sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocConfig {
    pub s0: f64,
    pub ratio: f64,
    pub n_min: usize,
    pub n_max: usize,
    /// Multipliers `m` of the sequences `s0·m·ratioⁿ` entering the infimum.
    pub s0_offsets: Vec<f64>,
    /// Band widths for `Σ`, largest first.
    pub r_values: Vec<f64>,
    /// Bands narrower than `r_floor_factor·h·‖∇y‖∞` are excluded.
    pub r_floor_factor: f64,
    pub tau: f64,
    pub directions: usize,
    pub seed: u64,
    /// Necessary condition accepted when every sampled total is ≥ −snc_tol.
    pub snc_tol: f64,
    /// Largest first-order residual accepted as stationary.
    pub foc_tol: f64,
    /// Use a zero gradient of ȳ in curvature integrals on elements whose
    /// nodal range strictly contains a breakpoint.
    pub zero_straddling_gradient: bool,
}

/// 24 band widths from 1e-1 down, eight per decade.
pub fn default_r_values() -> Vec<f64> {
    (0..24).map(|k| 0.1 * 10f64.powf(-(k as f64) / 8.0)).collect()
}

impl Default for SocConfig {
    fn default() -> Self {
        Self {
            s0: 0.1,
            ratio: 0.5,
            n_min: 3,
            n_max: 14,
            s0_offsets: vec![1.0, std::f64::consts::FRAC_1_SQRT_2, 0.5],
            r_values: default_r_values(),
            r_floor_factor: 4.0,
            tau: 1e-6,
            directions: 20,
            seed: 0,
            snc_tol: 1e-6,
            foc_tol: 1e-6,
            zero_straddling_gradient: false,
        }
    }
}

impl SocConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("soc.{m}")));
        if !(self.s0 > 0.0) {
            return bad("s0 must be > 0");
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad("ratio must lie in (0, 1)");
        }
        if self.n_min >= self.n_max {
            return bad("n_min must be < n_max");
        }
        if self.s0_offsets.is_empty() || self.s0_offsets.iter().any(|&m| !(m > 0.0)) {
            return bad("s0_offsets must be non-empty and positive");
        }
        if self.r_values.is_empty() || self.r_values.iter().any(|&r| !(r > 0.0)) {
            return bad("r_values must be non-empty and positive");
        }
        if !(self.r_floor_factor >= 0.0) {
            return bad("r_floor_factor must be ≥ 0");
        }
        if !(self.tau >= 0.0) {
            return bad("tau must be ≥ 0");
        }
        if !(self.snc_tol >= 0.0) || !(self.foc_tol > 0.0) {
            return bad("snc_tol must be ≥ 0 and foc_tol > 0");
        }
        Ok(())
    }

    /// The step sequence `s0·m·ratioⁿ` for `n = n_min..=n_max`.
    pub fn sequence(&self, offset: f64) -> Vec<(usize, f64)> {
        (self.n_min..=self.n_max)
            .map(|n| (n, self.s0 * offset * self.ratio.powi(n as i32)))
            .collect()
    }
}

/// A control with its state, adjoint and gradient `d̄ = φ̄ + ν ū`.
#[derive(Debug, Clone)]
pub struct StationaryTriple {
    pub u: GridFunction,
    pub y: GridFunction,
    pub phi: GridFunction,
    pub d: GridFunction,
    /// `j(ū)`
    pub value: f64,
    pub(crate) system: LinearizedSystem,
}

impl From<Evaluation> for StationaryTriple {
    fn from(ev: Evaluation) -> Self {
        Self { u: ev.u, y: ev.y, phi: ev.phi, d: ev.d, value: ev.value, system: ev.system }
    }
}

impl StationaryTriple {
    /// Linearized state `z_h = S'(ū)h`.
    pub fn linearized(&self, h: &GridFunction) -> GridFunction {
        self.system.solve(h)
    }
}
