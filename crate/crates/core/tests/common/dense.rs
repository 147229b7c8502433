use nalgebra::{DMatrix, DVector};
use pcq_core::ProblemSpec;

/// Dense reimplementation of the 1D linear-quadratic problem (`b ≡ 1`,
/// `a ≡ 0`): tridiagonal stiffness `(1/h)[−1 2 −1]` on the interior nodes,
/// lumped masses, control-to-state matrix `E` on all nodes.
pub struct DenseLq {
    mass: DVector<f64>,
    e: DMatrix<f64>,
    y_d: DVector<f64>,
    nu: f64,
}

impl DenseLq {
    pub fn new(spec: &ProblemSpec) -> Self {
        let mesh = spec.mesh();
        let n = mesh.num_nodes();
        let h = 1.0 / (n - 1) as f64;
        let mut mass = DVector::from_element(n, h);
        mass[0] = h / 2.0;
        mass[n - 1] = h / 2.0;
        let nf = n - 2;
        let mut k = DMatrix::zeros(nf, nf);
        for i in 0..nf {
            k[(i, i)] = 2.0 / h;
            if i + 1 < nf {
                k[(i, i + 1)] = -1.0 / h;
                k[(i + 1, i)] = -1.0 / h;
            }
        }
        let kinv = k.try_inverse().unwrap();
        let mut e = DMatrix::zeros(n, n);
        for i in 0..nf {
            for j in 0..nf {
                e[(i + 1, j + 1)] = kinv[(i, j)] * mass[j + 1];
            }
        }
        let y_d = DVector::from_column_slice(spec.objective().target().values());
        Self { mass, e, y_d, nu: spec.nu() }
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        let r = &self.e * u - &self.y_d;
        0.5 * r.component_mul(&r).dot(&self.mass) + 0.5 * self.nu * u.component_mul(u).dot(&self.mass)
    }

    /// Projected Gauss-Seidel on `min ½uᵀHu − cᵀu`, `α ≤ u ≤ β`, followed by
    /// an exact solve on the free nodes it identifies.
    pub fn kkt_solution(&self, alpha: f64, beta: f64) -> DVector<f64> {
        let m = DMatrix::from_diagonal(&self.mass);
        let hess = self.e.transpose() * &m * &self.e + &m * self.nu;
        let c = self.e.transpose() * &m * &self.y_d;
        let n = c.len();
        let mut u = DVector::<f64>::zeros(n);
        for _ in 0..20_000 {
            for i in 0..n {
                let off = hess.row(i).dot(&u.transpose()) - hess[(i, i)] * u[i];
                u[i] = ((c[i] - off) / hess[(i, i)]).clamp(alpha, beta);
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| u[i] > alpha && u[i] < beta).collect();
        let mut fixed = u.clone();
        for &i in &free {
            fixed[i] = 0.0;
        }
        let rhs = &c - &hess * &fixed;
        let sub = DMatrix::from_fn(free.len(), free.len(), |a, b| hess[(free[a], free[b])]);
        let sol = sub.lu().solve(&DVector::from_fn(free.len(), |a, _| rhs[free[a]])).unwrap();
        for (a, &i) in free.iter().enumerate() {
            u[i] = sol[a];
        }
        // multiplier signs certify the active sets
        let mu = &c - &hess * &u;
        for i in 0..n {
            if u[i] == alpha {
                assert!(mu[i] <= 1e-12);
            } else if u[i] == beta {
                assert!(mu[i] >= -1e-12);
            } else {
                assert!(u[i] > alpha && u[i] < beta && mu[i].abs() <= 1e-10);
            }
        }
        u
    }
}
