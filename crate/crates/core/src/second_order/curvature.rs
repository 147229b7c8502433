use serde::{Deserialize, Serialize};

use super::{SocConfig, StationaryTriple};
use crate::discretization::{
    element_gradient, element_points, interpolate, local_values, GridFunction, LevelCut, Mesh,
    QuadPoint,
};
use crate::error::Result;
use crate::pc2::Pc2Coefficient;
use crate::problem::Objective;
use crate::reduced::ReducedProblem;

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn strictly_straddles_any(values: &[f64; 3], nverts: usize, levels: &[f64]) -> bool {
    let lo = values[..nverts].iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values[..nverts].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    levels.iter().any(|&t| lo < t && t < hi)
}

fn is_plateau_on(values: &[f64; 3], nverts: usize, levels: &[f64]) -> bool {
    values[1..nverts].iter().all(|&v| v == values[0]) && levels.contains(&values[0])
}

/// Evaluator of the curvature functionals at a fixed stationary triple.
pub struct Curvature<'a, O: Objective> {
    reduced: &'a ReducedProblem<'a, O>,
    triple: &'a StationaryTriple,
    grad_y: Vec<[f64; 2]>,
    grad_phi: Vec<[f64; 2]>,
    /// `∇ȳ·∇φ̄` per element, with the optional straddling mask applied
    weight: Vec<f64>,
}

/// One row of a `Q̃` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QTildeRow {
    pub offset: f64,
    pub n: usize,
    pub s: f64,
    pub q: f64,
}

/// Finite surrogate of `Q_2(h)` and the tables it was taken from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q2Estimate {
    pub value: f64,
    /// `min_n q_n` for every offset, in configuration order.
    pub per_sequence: Vec<f64>,
    pub table: Vec<QTildeRow>,
}

/// `Σ_i ζ_i` at the quadrature points of each element where it is non-zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZetaField {
    pub elements: Vec<(usize, Vec<(QuadPoint, f64)>)>,
}

impl ZetaField {
    pub fn is_zero(&self) -> bool {
        self.elements.is_empty()
    }

    /// `∫ ζ w_e` for an element-wise constant weight.
    pub fn integrate(&self, weight: &[f64]) -> f64 {
        self.elements
            .iter()
            .map(|(e, pts)| weight[*e] * pts.iter().map(|(q, z)| q.weight * z).sum::<f64>())
            .sum()
    }
}

/// Levels at which `ζ` changes form: every `t_i` and `t_i ± δ`.
fn zeta_levels(coef: &Pc2Coefficient) -> Vec<f64> {
    let d = coef.delta();
    coef.breakpoints().iter().flat_map(|&t| [t - d, t, t + d]).collect()
}

/// `Σ_i ζ_i(ȳ, y_s)` at one point.
fn zeta_value(coef: &Pc2Coefficient, y_bar: f64, y_s: f64) -> f64 {
    let d = coef.delta();
    let pieces = coef.pieces();
    let mut z = 0.0;
    for (j, &t) in coef.breakpoints().iter().enumerate() {
        // breakpoint t = t_{j+1} separates piece j (left) and piece j+1 (right)
        let left = pieces[j].deriv(t);
        let right = pieces[j + 1].deriv(t);
        if y_bar > t && y_bar < t + d && y_s > t - d && y_s <= t {
            z += (left - right) * (t - y_s);
        }
        if y_bar > t - d && y_bar < t && y_s >= t && y_s < t + d {
            z += (right - left) * (t - y_s);
        }
    }
    z
}

impl<'a, O: Objective> Curvature<'a, O> {
    pub fn new(
        reduced: &'a ReducedProblem<'a, O>,
        triple: &'a StationaryTriple,
        zero_straddling_gradient: bool,
    ) -> Self {
        let spec = reduced.spec();
        let mesh = spec.mesh();
        let grad_y = element_gradient(&triple.y);
        let grad_phi = element_gradient(&triple.phi);
        let breaks = spec.coefficient().breakpoints();
        let weight = (0..mesh.num_elements())
            .map(|e| {
                let masked = zero_straddling_gradient
                    && strictly_straddles_any(
                        &local_values(mesh, e, triple.y.values()),
                        mesh.nverts(),
                        breaks,
                    );
                if masked {
                    0.0
                } else {
                    dot(grad_y[e], grad_phi[e])
                }
            })
            .collect();
        Self { reduced, triple, grad_y, grad_phi, weight }
    }

    pub fn triple(&self) -> &StationaryTriple {
        self.triple
    }

    fn mesh(&self) -> &Mesh {
        self.reduced.spec().mesh()
    }

    fn coef(&self) -> &Pc2Coefficient {
        self.reduced.spec().coefficient()
    }

    fn element_sum(&self, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
        let exec = self.reduced.spec().execution();
        exec.map(self.mesh().num_elements(), f).into_iter().sum()
    }

    /// `Q_s(h1, h2)` from precomputed linearized states `z_k = S'(ū)h_k`.
    pub fn q_smooth_z(
        &self,
        h1: &GridFunction,
        h2: &GridFunction,
        z1: &GridFunction,
        z2: &GridFunction,
    ) -> f64 {
        let spec = self.reduced.spec();
        let g2 = spec.objective().second(&self.triple.y, z1, z2);
        let mass = crate::discretization::inner_l2(h1, h2).expect("same mesh");
        let mesh = self.mesh();
        let coef = self.coef();
        let nv = mesh.nverts();
        let curv = self.element_sum(|e| {
            if self.weight[e] == 0.0 {
                return 0.0;
            }
            let yl = local_values(mesh, e, self.triple.y.values());
            let z1l = local_values(mesh, e, z1.values());
            let z2l = local_values(mesh, e, z2.values());
            let pts = element_points(mesh, e, &[LevelCut { values: yl, levels: coef.breakpoints() }]);
            let integral: f64 = pts
                .iter()
                .map(|q| {
                    let y = interpolate(&yl, nv, &q.bary);
                    q.weight
                        * coef.second_deriv(y)
                        * interpolate(&z1l, nv, &q.bary)
                        * interpolate(&z2l, nv, &q.bary)
                })
                .sum();
            integral * self.weight[e]
        });
        0.5 * g2 + 0.5 * spec.nu() * mass - 0.5 * curv
    }

    pub fn q_smooth(&self, h1: &GridFunction, h2: &GridFunction) -> f64 {
        let z1 = self.triple.linearized(h1);
        let z2 = self.triple.linearized(h2);
        self.q_smooth_z(h1, h2, &z1, &z2)
    }

    /// `Q_1(h1, h2)` from precomputed linearized states.
    pub fn q_one_z(&self, z1: &GridFunction, z2: &GridFunction) -> f64 {
        let mesh = self.mesh();
        let coef = self.coef();
        let nv = mesh.nverts();
        let breaks = coef.breakpoints();
        let gz1 = element_gradient(z1);
        let gz2 = element_gradient(z2);
        let total = self.element_sum(|e| {
            let yl = local_values(mesh, e, self.triple.y.values());
            let z1l = local_values(mesh, e, z1.values());
            let z2l = local_values(mesh, e, z2.values());
            let w1 = dot(gz2[e], self.grad_phi[e]);
            let w2 = dot(gz1[e], self.grad_phi[e]);
            if w1 == 0.0 && w2 == 0.0 {
                return 0.0;
            }
            // on a plateau ȳ ≡ t_i the one-sided slope depends on sign(z)
            let zero = [0.0];
            let mut cuts = vec![LevelCut { values: yl, levels: breaks }];
            if is_plateau_on(&yl, nv, breaks) {
                cuts.push(LevelCut { values: z1l, levels: &zero });
                cuts.push(LevelCut { values: z2l, levels: &zero });
            }
            element_points(mesh, e, &cuts)
                .iter()
                .map(|q| {
                    let y = interpolate(&yl, nv, &q.bary);
                    let a1 = coef.dir_deriv(y, interpolate(&z1l, nv, &q.bary));
                    let a2 = coef.dir_deriv(y, interpolate(&z2l, nv, &q.bary));
                    q.weight * (a1 * w1 + a2 * w2)
                })
                .sum()
        });
        -0.5 * total
    }

    pub fn q_one(&self, h1: &GridFunction, h2: &GridFunction) -> f64 {
        self.q_one_z(&self.triple.linearized(h1), &self.triple.linearized(h2))
    }

    /// `Σ_i ζ_i` for the perturbed state `y_s = S(ū + s h)`.
    pub fn zeta_terms(&self, s: f64, h: &GridFunction) -> Result<ZetaField> {
        let u_s = self.triple.u.add_scaled(s, h);
        let (y_s, _) = self.reduced.state_of(&u_s, Some(&self.triple.y))?;
        Ok(self.zeta_from_state(&y_s))
    }

    /// `Σ_i ζ_i` for a given perturbed state.
    pub fn zeta_from_state(&self, y_s: &GridFunction) -> ZetaField {
        let mesh = self.mesh();
        let coef = self.coef();
        let nv = mesh.nverts();
        let levels = zeta_levels(coef);
        let mut field = ZetaField::default();
        if levels.is_empty() {
            return field;
        }
        let per_element = self.reduced.spec().execution().map(mesh.num_elements(), |e| {
            let yl = local_values(mesh, e, self.triple.y.values());
            let sl = local_values(mesh, e, y_s.values());
            let lo = yl[..nv].iter().chain(&sl[..nv]).copied().fold(f64::INFINITY, f64::min);
            let hi = yl[..nv].iter().chain(&sl[..nv]).copied().fold(f64::NEG_INFINITY, f64::max);
            let d = coef.delta();
            if !coef.breakpoints().iter().any(|&t| hi > t - d && lo < t + d) {
                return Vec::new();
            }
            let cuts = [
                LevelCut { values: yl, levels: &levels },
                LevelCut { values: sl, levels: &levels },
            ];
            element_points(mesh, e, &cuts)
                .into_iter()
                .filter_map(|q| {
                    let z = zeta_value(
                        coef,
                        interpolate(&yl, nv, &q.bary),
                        interpolate(&sl, nv, &q.bary),
                    );
                    (z != 0.0).then_some((q, z))
                })
                .collect::<Vec<_>>()
        });
        for (e, pts) in per_element.into_iter().enumerate() {
            if !pts.is_empty() {
                field.elements.push((e, pts));
            }
        }
        field
    }

    /// `(1/s²) ∫ ζ(s, h) ∇ȳ·∇φ̄`.
    pub fn q_n(&self, s: f64, h: &GridFunction) -> Result<f64> {
        Ok(self.zeta_terms(s, h)?.integrate(&self.weight) / (s * s))
    }

    /// `min_n q_n` over the given steps, with the table.
    pub fn q_tilde(&self, seq: &[(usize, f64)], h: &GridFunction) -> Result<(f64, Vec<QTildeRow>)> {
        let exec = self.reduced.spec().execution();
        let qs = exec.try_map(seq.len(), |k| self.q_n(seq[k].1, h))?;
        let table: Vec<QTildeRow> = seq
            .iter()
            .zip(&qs)
            .map(|(&(n, s), &q)| QTildeRow { offset: f64::NAN, n, s, q })
            .collect();
        let value = qs.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((if value.is_finite() { value } else { 0.0 }, table))
    }

    /// Infimum of `Q̃` over the configured family of geometric sequences.
    pub fn q_two(&self, h: &GridFunction, cfg: &SocConfig) -> Result<Q2Estimate> {
        let mut per_sequence = Vec::with_capacity(cfg.s0_offsets.len());
        let mut table = Vec::new();
        for &m in &cfg.s0_offsets {
            let (v, rows) = self.q_tilde(&cfg.sequence(m), h)?;
            per_sequence.push(v);
            table.extend(rows.into_iter().map(|r| QTildeRow { offset: m, ..r }));
        }
        let value = per_sequence.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Q2Estimate { value, per_sequence, table })
    }

    /// Largest element gradient norm of φ̄.
    pub fn grad_phi_max(&self) -> f64 {
        self.grad_phi.iter().fold(0.0, |m, g| m.max(g[0].hypot(g[1])))
    }

    pub fn grad_y(&self) -> &[[f64; 2]] {
        &self.grad_y
    }
}
