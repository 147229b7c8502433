use serde::{Deserialize, Serialize};

use super::SocConfig;
use crate::discretization::{
    element_gradient, element_points, interpolate, local_values, max_gradient, GridFunction,
    LevelCut,
};
use crate::parallel::Execution;
use crate::pc2::Pc2Coefficient;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub r: f64,
    pub value: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    /// Maximum over the smallest admissible decade of `r`.
    pub value: f64,
    /// False when no band width passed the resolution floor; `value` then
    /// falls back to the widest band.
    pub resolved: bool,
    pub r_floor: f64,
    pub table: Vec<SigmaRow>,
}

/// `(1/r) Σ_m Σ_{i∈I⁺} σ_i ∫ 1{0 < |y − t_i| ≤ r} |∂_m y|` for one `r`.
pub fn sigma_at(coef: &Pc2Coefficient, y: &GridFunction, r: f64, exec: Execution) -> f64 {
    let (_, plus) = coef.index_sets(y.min(), y.max());
    if plus.is_empty() {
        return 0.0;
    }
    let mesh = y.mesh();
    let nv = mesh.nverts();
    let grads = element_gradient(y);
    let sigmas = coef.sigmas();
    let breaks = coef.breakpoints();
    let active: Vec<(f64, f64)> = plus.iter().map(|&i| (breaks[i - 1], sigmas[i - 1])).collect();
    let levels: Vec<f64> = active.iter().flat_map(|&(t, _)| [t - r, t, t + r]).collect();
    let per_element = exec.map(mesh.num_elements(), |e| {
        let g = grads[e];
        let l1 = g[0].abs() + g[1].abs();
        if l1 == 0.0 {
            return 0.0;
        }
        let yl = local_values(mesh, e, y.values());
        let lo = yl[..nv].iter().copied().fold(f64::INFINITY, f64::min);
        let hi = yl[..nv].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !active.iter().any(|&(t, _)| hi >= t - r && lo <= t + r) {
            return 0.0;
        }
        let pts = element_points(mesh, e, &[LevelCut { values: yl, levels: &levels }]);
        let weighted: f64 = pts
            .iter()
            .map(|q| {
                let v = interpolate(&yl, nv, &q.bary);
                let s: f64 = active
                    .iter()
                    .filter(|&&(t, _)| {
                        let dist = (v - t).abs();
                        dist > 0.0 && dist <= r
                    })
                    .map(|&(_, sigma)| sigma)
                    .sum();
                q.weight * s
            })
            .sum();
        weighted * l1
    });
    per_element.into_iter().sum::<f64>() / r
}

/// Finite surrogate for `Σ(y) = limsup_{r→0⁺}` of [`sigma_at`].
pub fn sigma_functional(coef: &Pc2Coefficient, y: &GridFunction, cfg: &SocConfig, exec: Execution) -> SigmaEstimate {
    let r_floor = cfg.r_floor_factor * y.mesh().h() * max_gradient(y);
    let mut table: Vec<SigmaRow> = cfg
        .r_values
        .iter()
        .map(|&r| SigmaRow { r, value: sigma_at(coef, y, r, exec), admissible: r >= r_floor })
        .collect();
    table.sort_by(|a, b| b.r.total_cmp(&a.r));
    let smallest = table.iter().filter(|row| row.admissible).map(|row| row.r).fold(f64::INFINITY, f64::min);
    if smallest.is_finite() {
        let value = table
            .iter()
            .filter(|row| row.admissible && row.r <= 10.0 * smallest)
            .map(|row| row.value)
            .fold(0.0, f64::max);
        SigmaEstimate { value, resolved: true, r_floor, table }
    } else {
        let value = table.first().map_or(0.0, |row| row.value);
        SigmaEstimate { value, resolved: false, r_floor, table }
    }
}
