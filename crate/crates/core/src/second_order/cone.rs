use crate::discretization::GridFunction;
use crate::problem::BoxBounds;

/// Nodewise projection onto the critical cone `C^τ` at `(ū, d̄)`:
/// zero where `|d̄| > τ`, sign-restricted where a bound is active (within
/// `tol_active·(β − α)`), unchanged elsewhere. `τ = 0` gives the strict
/// critical cone.
pub fn critical_cone_project(
    u_bar: &GridFunction,
    d_bar: &GridFunction,
    bounds: &BoxBounds,
    h: &GridFunction,
    tau: f64,
    tol_active: f64,
) -> GridFunction {
    let alpha = bounds.alpha().values();
    let beta = bounds.beta().values();
    let values = (0..h.values().len())
        .map(|k| {
            let (u, d, v) = (u_bar.values()[k], d_bar.values()[k], h.values()[k]);
            let tol = tol_active * (beta[k] - alpha[k]);
            if d.abs() > tau {
                0.0
            } else if u <= alpha[k] + tol {
                v.max(0.0)
            } else if u >= beta[k] - tol {
                v.min(0.0)
            } else {
                v
            }
        })
        .collect();
    GridFunction::new(h.mesh().clone(), values).expect("same mesh")
}
