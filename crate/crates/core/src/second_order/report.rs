use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::curvature::{Curvature, Q2Estimate};
use super::sigma::{sigma_functional, SigmaEstimate};
use super::{critical_cone_project, SocConfig, StationaryTriple};
use crate::discretization::{l2_norm, GridFunction};
use crate::error::{Error, Result};
use crate::problem::Objective;
use crate::reduced::{fixed_point_residual, ReducedProblem};

/// Relative tolerance for classifying a bound as active.
pub const TOL_ACTIVE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub index: usize,
    /// L² norm of the direction (1 after normalization).
    pub norm: f64,
    pub q_s: f64,
    pub q_1: f64,
    pub q_2: Q2Estimate,
    pub total: f64,
    /// `‖z_h‖∞`
    pub z_inf: f64,
    /// `Σ(ȳ)·‖∇φ̄‖∞·‖z_h‖²∞`
    pub q2_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub foc_residual: f64,
    pub tau: f64,
    pub sigma: SigmaEstimate,
    pub grad_phi_max: f64,
    pub directions: Vec<DirectionReport>,
    /// Samples whose cone projection vanished.
    pub skipped_directions: usize,
    pub cone_trivial: bool,
    /// Smallest `Q_s + Q_1 + Q_2` over the sampled directions.
    pub min_total: Option<f64>,
    pub snc_ok: bool,
    /// Smallest `total/‖h‖²`, an estimate of the growth constant.
    pub ssc_margin: Option<f64>,
    pub message: String,
}

/// One smoothing sweep: each nodal value is replaced by the average over
/// itself and its mesh neighbours.
fn smooth(h: &GridFunction, neighbors: &[Vec<usize>]) -> GridFunction {
    let v = h.values();
    let values = neighbors
        .iter()
        .enumerate()
        .map(|(k, nb)| (v[k] + nb.iter().map(|&j| v[j]).sum::<f64>()) / (1 + nb.len()) as f64)
        .collect();
    GridFunction::new(h.mesh().clone(), values).expect("same mesh")
}

/// Samples directions in the critical cone and evaluates the curvature
/// functionals on each of them.
pub fn soc_report<O: Objective>(
    reduced: &ReducedProblem<'_, O>,
    triple: &StationaryTriple,
    cfg: &SocConfig,
) -> Result<CurvatureReport> {
    cfg.validate()?;
    let spec = reduced.spec();
    let foc_residual = fixed_point_residual(spec.bounds(), &triple.u, &triple.d);
    if foc_residual > cfg.foc_tol {
        return Err(Error::NotStationary { residual: foc_residual, tolerance: cfg.foc_tol });
    }
    let exec = spec.execution();
    let curvature = Curvature::new(reduced, triple, cfg.zero_straddling_gradient);
    let sigma = sigma_functional(spec.coefficient(), &triple.y, cfg, exec);
    let grad_phi_max = curvature.grad_phi_max();

    let mesh = spec.mesh();
    let neighbors = mesh.neighbors();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::new();
    let mut skipped = 0;
    for index in 0..cfg.directions {
        let raw: Vec<f64> = (0..mesh.num_nodes()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let h = smooth(&GridFunction::new(mesh.clone(), raw)?, &neighbors);
        let h = critical_cone_project(&triple.u, &triple.d, spec.bounds(), &h, cfg.tau, TOL_ACTIVE);
        let norm = l2_norm(&h);
        if norm == 0.0 {
            skipped += 1;
            continue;
        }
        samples.push((index, h.scale(1.0 / norm)));
    }

    let directions = exec.try_map(samples.len(), |k| {
        let (index, h) = &samples[k];
        let z = triple.linearized(h);
        let q_s = curvature.q_smooth_z(h, h, &z, &z);
        let q_1 = curvature.q_one_z(&z, &z);
        let q_2 = curvature.q_two(h, cfg)?;
        let z_inf = z.max_abs();
        Ok::<_, Error>(DirectionReport {
            index: *index,
            norm: l2_norm(h),
            q_s,
            q_1,
            total: q_s + q_1 + q_2.value,
            q_2,
            z_inf,
            q2_bound: sigma.value * grad_phi_max * z_inf * z_inf,
        })
    })?;

    let cone_trivial = directions.is_empty();
    let min_total = directions.iter().map(|d| d.total).reduce(f64::min);
    let ssc_margin = directions.iter().map(|d| d.total / (d.norm * d.norm)).reduce(f64::min);
    let snc_ok = min_total.is_none_or(|m| m >= -cfg.snc_tol);
    let message = if cone_trivial {
        "critical cone trivial: sufficient condition holds vacuously".to_string()
    } else if !snc_ok {
        "negative curvature found on the critical cone".to_string()
    } else if ssc_margin.is_some_and(|m| m > 0.0) {
        "positive curvature on all sampled critical directions".to_string()
    } else {
        "necessary condition holds; sampled curvature is not strictly positive".to_string()
    };
    Ok(CurvatureReport {
        foc_residual,
        tau: cfg.tau,
        sigma,
        grad_phi_max,
        directions,
        skipped_directions: skipped,
        cone_trivial,
        min_total,
        snc_ok,
        ssc_margin,
        message,
    })
}
