//! Compressed sparse rows, a banded LU factorization with partial pivoting,
//! and Jacobi-preconditioned conjugate gradients.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Square or rectangular matrix in CSR form with sorted, duplicate-free rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates
    /// in input order so the result is deterministic.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let (lo, hi) = (counts[r], counts[r + 1]);
            order.clear();
            order.extend(lo..hi);
            // stable sort keeps insertion order among equal columns
            order.sort_by_key(|&k| cols[k]);
            for &k in &order {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == cols[k] {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst / scale
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for r in 0..self.nrows {
            for (c, _) in self.row(r) {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    /// Coordinate-list text, one `row col value` line per stored entry.
    pub fn to_coo_text(&self) -> String {
        let mut out = format!("% {} {} {}\n", self.nrows, self.ncols, self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let _ = writeln!(out, "{r} {c} {v:.17e}");
            }
        }
        out
    }
}

/// Pivots smaller than this fraction of the largest pivot are treated as
/// singular.
const SINGULAR_RATIO: f64 = 1e-14;

/// LU factorization `P A = L U` of a banded matrix with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    /// width of the stored row window: columns `i - kl ..= i + kl + ku`
    width: usize,
    /// U (and scratch) in row-relative storage
    band: Vec<f64>,
    /// multipliers: `mult[k * kl + (i - k - 1)]` for rows `i` below `k`
    mult: Vec<f64>,
    piv: Vec<usize>,
    pivot_ratio: f64,
}

impl BandLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "band LU needs a square matrix");
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * width];
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        for r in 0..n {
            for (c, v) in a.row(r) {
                band[at(r, c)] = v;
            }
        }
        let mut mult = vec![0.0; n * kl];
        let mut piv = vec![0; n];
        let mut max_piv = 0.0f64;
        let mut min_piv = f64::INFINITY;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = band[at(k, k)].abs();
            for i in k + 1..=last_row {
                let v = band[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    band.swap(at(k, j), at(p, j));
                }
            }
            let pivot = band[at(k, k)];
            max_piv = max_piv.max(pivot.abs());
            min_piv = min_piv.min(pivot.abs());
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularSystem { pivot_ratio: 0.0 });
            }
            for i in k + 1..=last_row {
                let m = band[at(i, k)] / pivot;
                mult[k * kl + (i - k - 1)] = m;
                band[at(i, k)] = 0.0;
                if m != 0.0 {
                    for j in k + 1..=last_col {
                        band[at(i, j)] -= m * band[at(k, j)];
                    }
                }
            }
        }
        let pivot_ratio = if n == 0 { 1.0 } else { min_piv / max_piv };
        if pivot_ratio < SINGULAR_RATIO {
            return Err(Error::SingularSystem { pivot_ratio });
        }
        Ok(Self { n, kl, width, band, mult, piv, pivot_ratio })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Smallest over largest pivot magnitude; a cheap conditioning proxy.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    #[inline]
    fn u(&self, i: usize, j: usize) -> f64 {
        self.band[i * self.width + (j + self.kl - i)]
    }

    fn upper_last_col(&self, k: usize) -> usize {
        (k + self.width - self.kl - 1).min(self.n - 1)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                    x[i] -= self.mult[k * self.kl + (i - k - 1)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=self.upper_last_col(k) {
                s -= self.u(k, j) * x[j];
            }
            x[k] = s / self.u(k, k);
        }
        x
    }

    /// Solves `Aᵀ x = c` with the same factors.
    pub fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut w = c.to_vec();
        // Uᵀ w = c, forward in k
        for k in 0..n {
            w[k] /= self.u(k, k);
            let wk = w[k];
            if wk != 0.0 {
                for j in k + 1..=self.upper_last_col(k) {
                    w[j] -= self.u(k, j) * wk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = w[k];
            for i in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                s -= self.mult[k * self.kl + (i - k - 1)] * w[i];
            }
            w[k] = s;
            w.swap(k, self.piv[k]);
        }
        w
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned CG for symmetric positive-definite `a`. Stops when
/// `‖r‖ ≤ rtol·‖b‖`.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], rtol: f64, max_iter: usize) -> Result<CgResult> {
    let n = a.nrows();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgResult { x, iterations: 0, residual: 0.0 });
    }
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::InvalidProblem("CG requires a positive diagonal".into()));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = a.matvec(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = norm(&r);
        if rn <= rtol * bnorm {
            return Ok(CgResult { x, iterations: it, residual: rn / bnorm });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::CgNotConverged { iterations: max_iter, residual: norm(&r) / bnorm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v: f64 = rng.random_range(-1.0..1.0);
                // weak diagonal so pivoting actually happens
                trip.push((i, j, if i == j { 0.1 * v } else { v }));
            }
        }
        CsrMatrix::from_triplets(n, n, &trip)
    }

    fn dense_mul(a: &CsrMatrix, x: &[f64]) -> Vec<f64> {
        a.matvec(x)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 0, 2.0), (0, 1, 3.0), (1, 1, 5.0)]);
        assert_eq!(m.to_dense(), vec![vec![2.0, 4.0], vec![0.0, 5.0]]);
        assert_eq!(m.nnz(), 3);
        assert!(m.to_coo_text().starts_with("% 2 2 3\n0 0 "));
    }

    #[test]
    fn singular_is_reported() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(BandLu::factor(&m), Err(Error::SingularSystem { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn lu_solves_and_transpose_solves(n in 1usize..30, kl in 0usize..4, ku in 0usize..4, seed in 0u64..1000) {
            let a = random_banded(n, kl, ku, seed);
            let Ok(lu) = BandLu::factor(&a) else { return Ok(()); };
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let anorm = (0..n).map(|r| a.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
            let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let x = lu.solve(&b);
            let r = dense_mul(&a, &x);
            let bound = 1e-12 * (anorm * inf(&x) + inf(&b));
            for i in 0..n {
                prop_assert!((r[i] - b[i]).abs() <= bound, "row {i}: {} vs {}", r[i], b[i]);
            }
            let y = lu.solve_transpose(&b);
            let rt = dense_mul(&a.transpose(), &y);
            let bound = 1e-12 * (anorm.max(1.0) * n as f64 * inf(&y) + inf(&b));
            for i in 0..n {
                prop_assert!((rt[i] - b[i]).abs() <= bound);
            }
        }
    }

    #[test]
    fn cg_matches_lu_on_spd() {
        let n = 40;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 2.5));
            if i + 1 < n {
                trip.push((i, i + 1, -1.0));
                trip.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &trip);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let direct = BandLu::factor(&a).unwrap().solve(&b);
        let cg = conjugate_gradient(&a, &b, 1e-14, 500).unwrap();
        for (x, y) in direct.iter().zip(&cg.x) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
