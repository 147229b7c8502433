use super::mesh::GridFunction;
use crate::error::Result;

/// L², H¹-seminorm and maximum norm of a P1 field.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub linf: f64,
}

/// Lumped-mass L² inner product `Σ_k m_k g1_k g2_k`.
pub fn inner_l2(g1: &GridFunction, g2: &GridFunction) -> Result<f64> {
    g1.check_same_mesh(g2)?;
    Ok(g1
        .values()
        .iter()
        .zip(g2.values())
        .zip(g1.mesh().lumped_mass())
        .map(|((a, b), m)| m * a * b)
        .sum())
}

pub fn l2_norm(g: &GridFunction) -> f64 {
    g.values().iter().zip(g.mesh().lumped_mass()).map(|(v, m)| m * v * v).sum::<f64>().sqrt()
}

/// Constant gradient of the P1 interpolant on every element.
pub fn element_gradient(g: &GridFunction) -> Vec<[f64; 2]> {
    let mesh = g.mesh();
    (0..mesh.num_elements())
        .map(|e| {
            let mut grad = [0.0; 2];
            for (&node, bg) in mesh.element_nodes(e).iter().zip(mesh.basis_grads(e)) {
                grad[0] += g.values()[node] * bg[0];
                grad[1] += g.values()[node] * bg[1];
            }
            grad
        })
        .collect()
}

pub fn h1_seminorm(g: &GridFunction) -> f64 {
    let mesh = g.mesh();
    element_gradient(g)
        .iter()
        .enumerate()
        .map(|(e, d)| mesh.measure(e) * (d[0] * d[0] + d[1] * d[1]))
        .sum::<f64>()
        .sqrt()
}

/// Largest Euclidean norm of an element gradient.
pub fn max_gradient(g: &GridFunction) -> f64 {
    element_gradient(g).iter().fold(0.0, |m, d| m.max(d[0].hypot(d[1])))
}

pub fn norms(g: &GridFunction) -> Norms {
    Norms { l2: l2_norm(g), h1_semi: h1_seminorm(g), linf: g.max_abs() }
}
