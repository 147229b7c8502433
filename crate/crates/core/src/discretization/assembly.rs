//! Assembly of the bilinear form
//!
//! ```text
//! B(w, v) = ∫ κ ∇w·∇v + ∫ (c_div·∇v) w + ∫ (c_grad·∇w) v
//! ```
//!
//! on P1 elements with homogeneous Dirichlet rows and columns eliminated.

use std::sync::{Arc, OnceLock};

use super::mesh::{GridFunction, Mesh};
use super::quadrature::{element_points, QuadPoint};
use super::sparse::{conjugate_gradient, BandLu, CsrMatrix};
use crate::error::{Error, Result};
use crate::parallel::Execution;

/// Coefficient samples of the form on one element.
#[derive(Debug, Clone, Default)]
pub struct ElementForm {
    pub points: Vec<QuadPoint>,
    pub kappa: Vec<f64>,
    pub conv_div: Option<Vec<[f64; 2]>>,
    pub conv_grad: Option<Vec<[f64; 2]>>,
}

/// Supplies quadrature points and coefficient samples element by element.
pub trait FormCoefficients: Sync {
    fn element(&self, mesh: &Mesh, e: usize) -> ElementForm;
}

/// Coefficients given as functions of the physical point, sampled with the
/// plain (uncut) element rule.
pub struct PointwiseForm<K, D = fn([f64; 2]) -> [f64; 2], G = fn([f64; 2]) -> [f64; 2]> {
    pub kappa: K,
    pub conv_div: Option<D>,
    pub conv_grad: Option<G>,
}

impl<K> PointwiseForm<K>
where
    K: Fn([f64; 2]) -> f64 + Sync,
{
    pub fn diffusion(kappa: K) -> Self {
        Self { kappa, conv_div: None, conv_grad: None }
    }
}

pub fn physical_point(mesh: &Mesh, e: usize, bary: &[f64; 3]) -> [f64; 2] {
    let mut x = [0.0; 2];
    for (k, &node) in mesh.element_nodes(e).iter().enumerate() {
        let p = mesh.node(node);
        x[0] += bary[k] * p[0];
        x[1] += bary[k] * p[1];
    }
    x
}

impl<K, D, G> FormCoefficients for PointwiseForm<K, D, G>
where
    K: Fn([f64; 2]) -> f64 + Sync,
    D: Fn([f64; 2]) -> [f64; 2] + Sync,
    G: Fn([f64; 2]) -> [f64; 2] + Sync,
{
    fn element(&self, mesh: &Mesh, e: usize) -> ElementForm {
        let points = element_points(mesh, e, &[]);
        let xs: Vec<[f64; 2]> = points.iter().map(|q| physical_point(mesh, e, &q.bary)).collect();
        ElementForm {
            kappa: xs.iter().map(|&x| (self.kappa)(x)).collect(),
            conv_div: self.conv_div.as_ref().map(|f| xs.iter().map(|&x| f(x)).collect()),
            conv_grad: self.conv_grad.as_ref().map(|f| xs.iter().map(|&x| f(x)).collect()),
            points,
        }
    }
}

/// Square operator on free nodes plus the coupling to boundary nodes.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    mesh: Arc<Mesh>,
    free: CsrMatrix,
    /// free rows × all nodes, boundary columns only
    coupling: CsrMatrix,
    symmetric: bool,
}

type LocalMatrix = [[f64; 3]; 3];

fn local_matrix(mesh: &Mesh, e: usize, form: &ElementForm) -> Result<LocalMatrix> {
    let nv = mesh.nverts();
    let grads = mesh.basis_grads(e);
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    let mut loc = [[0.0; 3]; 3];
    for (q, point) in form.points.iter().enumerate() {
        let kappa = form.kappa[q];
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::NonPositiveDiffusion { element: e, value: kappa });
        }
        let w = point.weight;
        let cd = form.conv_div.as_ref().map(|c| c[q]);
        let cg = form.conv_grad.as_ref().map(|c| c[q]);
        for c in cd.iter().chain(cg.iter()) {
            if !(c[0].is_finite() && c[1].is_finite()) {
                return Err(Error::InvalidProblem(format!("non-finite convection on element {e}")));
            }
        }
        for i in 0..nv {
            for j in 0..nv {
                let mut v = kappa * dot(grads[j], grads[i]);
                if let Some(c) = cd {
                    v += dot(c, grads[i]) * point.bary[j];
                }
                if let Some(c) = cg {
                    v += dot(c, grads[j]) * point.bary[i];
                }
                loc[i][j] += w * v;
            }
        }
    }
    Ok(loc)
}

/// Assembles the operator. Element kernels run under `exec`; the scatter is
/// sequential in element order, so both modes give identical matrices.
pub fn assemble_operator(
    mesh: &Arc<Mesh>,
    coeffs: &impl FormCoefficients,
    exec: Execution,
) -> Result<SparseOperator> {
    let ne = mesh.num_elements();
    let mut symmetric = true;
    let locals = exec.try_map(ne, |e| {
        let form = coeffs.element(mesh, e);
        let sym = form.conv_div.is_none() && form.conv_grad.is_none();
        local_matrix(mesh, e, &form).map(|m| (m, sym))
    })?;
    let nv = mesh.nverts();
    let mut free_trip = Vec::with_capacity(ne * nv * nv);
    let mut coup_trip = Vec::new();
    for (e, (loc, sym)) in locals.iter().enumerate() {
        symmetric &= sym;
        let nodes = mesh.element_nodes(e);
        for i in 0..nv {
            let Some(r) = mesh.free_index(nodes[i]) else { continue };
            for j in 0..nv {
                match mesh.free_index(nodes[j]) {
                    Some(c) => free_trip.push((r, c, loc[i][j])),
                    None => coup_trip.push((r, nodes[j], loc[i][j])),
                }
            }
        }
    }
    let nf = mesh.num_free();
    Ok(SparseOperator {
        mesh: mesh.clone(),
        free: CsrMatrix::from_triplets(nf, nf, &free_trip),
        coupling: CsrMatrix::from_triplets(nf, mesh.num_nodes(), &coup_trip),
        symmetric,
    })
}

/// Lumped-mass load `M_L g`, one entry per node.
pub fn lumped_load(g: &GridFunction) -> Vec<f64> {
    g.values().iter().zip(g.mesh().lumped_mass()).map(|(v, m)| v * m).collect()
}

impl SparseOperator {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn matrix(&self) -> &CsrMatrix {
        &self.free
    }
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn factor(&self) -> Result<FactoredOperator> {
        Ok(FactoredOperator {
            lu: BandLu::factor(&self.free)?,
            op: self.clone(),
            transposed: OnceLock::new(),
        })
    }

    /// Applies the operator to a field (free rows only, boundary values
    /// included through the coupling block).
    pub fn apply(&self, g: &GridFunction) -> Vec<f64> {
        let mut out = self.free.matvec(&g.free_values());
        let coupled = self.coupling.matvec(g.values());
        for (o, c) in out.iter_mut().zip(coupled) {
            *o += c;
        }
        out
    }
}

/// A factored operator; reusable for many right-hand sides and for the
/// transposed system.
#[derive(Debug, Clone)]
pub struct FactoredOperator {
    op: SparseOperator,
    lu: BandLu,
    transposed: OnceLock<CsrMatrix>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const REFINE_TOL: f64 = 1e-12;

impl FactoredOperator {
    pub fn operator(&self) -> &SparseOperator {
        &self.op
    }
    pub fn pivot_ratio(&self) -> f64 {
        self.lu.pivot_ratio()
    }

    /// Solves `A x = f` on free nodes with a few steps of iterative
    /// refinement against the assembled matrix.
    pub fn solve_free(&self, f: &[f64]) -> Vec<f64> {
        self.refine(f, false)
    }

    pub fn solve_transpose_free(&self, f: &[f64]) -> Vec<f64> {
        self.refine(f, true)
    }

    fn refine(&self, f: &[f64], transpose: bool) -> Vec<f64> {
        let solve = |b: &[f64]| if transpose { self.lu.solve_transpose(b) } else { self.lu.solve(b) };
        let apply = |x: &[f64]| {
            if transpose {
                self.transposed.get_or_init(|| self.op.free.transpose()).matvec(x)
            } else {
                self.op.free.matvec(x)
            }
        };
        let mut x = solve(f);
        let fnorm = norm(f);
        for _ in 0..2 {
            let ax = apply(&x);
            let r: Vec<f64> = f.iter().zip(&ax).map(|(a, b)| a - b).collect();
            if norm(&r) <= REFINE_TOL * fnorm {
                break;
            }
            let dx = solve(&r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        x
    }

    /// Solves with the full-node load `load` (only free entries are used).
    pub fn solve(&self, load: &[f64]) -> GridFunction {
        let mesh = &self.op.mesh;
        let f: Vec<f64> = mesh.free_nodes().iter().map(|&k| load[k]).collect();
        GridFunction::from_free(mesh, &self.solve_free(&f))
    }

    pub fn solve_transpose(&self, load: &[f64]) -> GridFunction {
        let mesh = &self.op.mesh;
        let f: Vec<f64> = mesh.free_nodes().iter().map(|&k| load[k]).collect();
        GridFunction::from_free(mesh, &self.solve_transpose_free(&f))
    }
}

/// Solves `A y = f` with Dirichlet data `boundary` (zero when `None`).
/// Falls back to CG when the direct factorization reports a singular pivot
/// and the operator is symmetric.
pub fn solve_dirichlet(
    op: &SparseOperator,
    load: &[f64],
    boundary: Option<&GridFunction>,
) -> Result<GridFunction> {
    let mesh = op.mesh();
    if load.len() != mesh.num_nodes() {
        return Err(Error::LengthMismatch { expected: mesh.num_nodes(), got: load.len() });
    }
    let mut f: Vec<f64> = mesh.free_nodes().iter().map(|&k| load[k]).collect();
    let mut bvals = vec![0.0; mesh.num_nodes()];
    if let Some(g) = boundary {
        if !Arc::ptr_eq(g.mesh(), mesh) && **g.mesh() != **mesh {
            return Err(Error::MeshMismatch);
        }
        for k in 0..mesh.num_nodes() {
            if mesh.boundary_mask()[k] {
                bvals[k] = g.values()[k];
            }
        }
        let lift = op.coupling.matvec(&bvals);
        for (fi, l) in f.iter_mut().zip(lift) {
            *fi -= l;
        }
    }
    let x = match op.factor() {
        Ok(fac) => fac.solve_free(&f),
        Err(Error::SingularSystem { .. }) if op.symmetric => {
            log::warn!("direct factorization singular; falling back to CG");
            conjugate_gradient(&op.free, &f, 1e-13, 10 * f.len().max(10))?.x
        }
        Err(e) => return Err(e),
    };
    let mut values = bvals;
    for (k, &node) in mesh.free_nodes().iter().enumerate() {
        values[node] = x[k];
    }
    GridFunction::new(mesh.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_stiffness_entries() {
        let mesh = Mesh::interval(0.0, 1.0, 2).unwrap();
        let op = assemble_operator(&mesh, &PointwiseForm::diffusion(|_| 1.0), Execution::Sequential)
            .unwrap();
        assert_eq!(op.matrix().to_dense(), vec![vec![4.0]]);
        let mesh = Mesh::interval(0.0, 2.0, 4).unwrap();
        let op = assemble_operator(&mesh, &PointwiseForm::diffusion(|_| 1.0), Execution::Sequential)
            .unwrap();
        let d = op.matrix().to_dense();
        // h = 0.5: diagonal 2/h = 4, off-diagonal -1/h = -2
        assert_eq!(d[1], vec![-2.0, 4.0, -2.0]);
    }

    #[test]
    fn rejects_non_positive_kappa() {
        let mesh = Mesh::interval(0.0, 1.0, 4).unwrap();
        let form = PointwiseForm::diffusion(|x: [f64; 2]| x[0] - 0.5);
        assert!(matches!(
            assemble_operator(&mesh, &form, Execution::Sequential),
            Err(Error::NonPositiveDiffusion { .. })
        ));
    }

    #[test]
    fn affine_data_is_reproduced() {
        let mesh = Mesh::rectangle([0.0, 1.0], [0.0, 2.0], 6).unwrap();
        let op = assemble_operator(&mesh, &PointwiseForm::diffusion(|_| 1.7), Execution::Sequential)
            .unwrap();
        let g = GridFunction::interpolate(&mesh, |x, y| 1.0 - 2.0 * x + 0.5 * y);
        let y = solve_dirichlet(&op, &vec![0.0; mesh.num_nodes()], Some(&g)).unwrap();
        for (a, b) in y.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_load_gives_zero() {
        let mesh = Mesh::rectangle([0.0, 1.0], [0.0, 1.0], 5).unwrap();
        let op = assemble_operator(&mesh, &PointwiseForm::diffusion(|_| 1.0), Execution::Sequential)
            .unwrap();
        let y = solve_dirichlet(&op, &vec![0.0; mesh.num_nodes()], None).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }
}
