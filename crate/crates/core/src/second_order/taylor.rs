use serde::{Deserialize, Serialize};

use super::StationaryTriple;
use crate::discretization::{
    element_gradient, element_points, inner_l2, interpolate, l2_norm, local_values, GridFunction,
    LevelCut,
};
use crate::error::Result;
use crate::problem::Objective;
use crate::reduced::ReducedProblem;

/// Both sides of the second-order expansion of `j(u) − j(ū)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorTerms {
    pub perturbation: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Largest magnitude among the individual right-hand terms.
    pub scale: f64,
}

/// Evaluates
///
/// ```text
/// j(u) − j(ū) = ∫₀¹(1−s)G''(ȳ+s(y_u−ȳ))(y_u−ȳ)² ds + ν/2‖u−ū‖² + (d̄, u−ū)
///             − ∫ [a(y_u) − a(ȳ)] ∇φ̄·∇(y_u − ȳ)
///             − ∫ [a(y_u) − a(ȳ) − 1{ȳ∉E} a'(ȳ)(y_u − ȳ)] ∇φ̄·∇ȳ
/// ```
///
/// and returns both sides. The identity holds for any `u` once `ȳ` and `φ̄`
/// are the state and adjoint of `ū`.
pub fn taylor_residual<O: Objective>(
    reduced: &ReducedProblem<'_, O>,
    triple: &StationaryTriple,
    u: &GridFunction,
) -> Result<TaylorTerms> {
    let spec = reduced.spec();
    let y_u = if u.values() == triple.u.values() {
        triple.y.clone()
    } else {
        reduced.state_of(u, Some(&triple.y))?.0
    };
    let lhs = spec.objective().value(&y_u) + 0.5 * spec.nu() * l2_norm(u).powi(2) - triple.value;
    let du = u.add_scaled(-1.0, &triple.u);

    let mesh = spec.mesh();
    let coef = spec.coefficient();
    let nv = mesh.nverts();
    let gy = element_gradient(&triple.y);
    let gu = element_gradient(&y_u);
    let gp = element_gradient(&triple.phi);
    let parts = spec.execution().map(mesh.num_elements(), |e| {
        let w_diff = gp[e][0] * (gu[e][0] - gy[e][0]) + gp[e][1] * (gu[e][1] - gy[e][1]);
        let w_bar = gp[e][0] * gy[e][0] + gp[e][1] * gy[e][1];
        if w_diff == 0.0 && w_bar == 0.0 {
            return (0.0, 0.0);
        }
        let yl = local_values(mesh, e, triple.y.values());
        let ul = local_values(mesh, e, y_u.values());
        let cuts = [
            LevelCut { values: yl, levels: coef.breakpoints() },
            LevelCut { values: ul, levels: coef.breakpoints() },
        ];
        let mut first = 0.0;
        let mut second = 0.0;
        for q in element_points(mesh, e, &cuts) {
            let yb = interpolate(&yl, nv, &q.bary);
            let yu = interpolate(&ul, nv, &q.bary);
            let jump = coef.eval(yu) - coef.eval(yb);
            first += q.weight * jump;
            second += q.weight * (jump - coef.deriv_off_exceptional(yb) * (yu - yb));
        }
        (first * w_diff, second * w_bar)
    });
    let (i1, i2) = parts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let terms = [
        spec.objective().taylor_remainder(&triple.y, &y_u),
        0.5 * spec.nu() * l2_norm(&du).powi(2),
        inner_l2(&triple.d, &du)?,
        -i1,
        -i2,
    ];
    let rhs: f64 = terms.iter().sum();
    let scale = terms.iter().fold(lhs.abs(), |m, t| m.max(t.abs()));
    Ok(TaylorTerms { perturbation: l2_norm(&du), lhs, rhs, residual: (lhs - rhs).abs(), scale })
}
