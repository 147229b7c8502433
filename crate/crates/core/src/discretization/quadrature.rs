//! Element quadrature that resolves level sets of P1 fields.
//!
//! Integrands in this crate are piecewise polynomials of P1 fields whose
//! pieces change where a field crosses a threshold (a breakpoint of the
//! coefficient, or the edge of an indicator band). An element is first cut
//! along every such level line, which is a straight segment for a P1 field,
//! and each convex sub-cell is then integrated with a degree-5 rule. The
//! result is exact for integrands that are polynomials of degree ≤ 5 on every
//! sub-cell.

use super::mesh::Mesh;

/// A quadrature point in barycentric coordinates of its element. The weight
/// already includes the element measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// A P1 field restricted to one element together with the levels at which
/// the integrand changes form.
#[derive(Debug, Clone, Copy)]
pub struct LevelCut<'a> {
    pub values: [f64; 3],
    pub levels: &'a [f64],
}

/// Nodal values of `field` on element `e` (unused slots are zero).
pub fn local_values(mesh: &Mesh, e: usize, field: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (slot, &node) in mesh.element_nodes(e).iter().enumerate() {
        out[slot] = field[node];
    }
    out
}

/// Evaluates a P1 field at barycentric coordinates. Constant fields return
/// their nodal value exactly, so plateaus sitting on a breakpoint are
/// recognised by exact comparison.
#[inline]
pub fn interpolate(values: &[f64; 3], nverts: usize, bary: &[f64; 3]) -> f64 {
    if values[1..nverts].iter().all(|&v| v == values[0]) {
        return values[0];
    }
    (0..nverts).map(|k| values[k] * bary[k]).sum()
}

const GAUSS3_X: [f64; 3] = [0.112_701_665_379_258_31, 0.5, 0.887_298_334_620_741_7];
const GAUSS3_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Seven-point degree-5 rule on the reference triangle, as barycentric
/// points with weights summing to one.
fn triangle_rule() -> [([f64; 3], f64); 7] {
    let s = 15f64.sqrt();
    let a1 = (6.0 - s) / 21.0;
    let b1 = (9.0 + 2.0 * s) / 21.0;
    let a2 = (6.0 + s) / 21.0;
    let b2 = (9.0 - 2.0 * s) / 21.0;
    let w1 = (155.0 - s) / 1200.0;
    let w2 = (155.0 + s) / 1200.0;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        ([a1, a1, b1], w1),
        ([a1, b1, a1], w1),
        ([b1, a1, a1], w1),
        ([a2, a2, b2], w2),
        ([a2, b2, a2], w2),
        ([b2, a2, a2], w2),
    ]
}

fn strictly_straddles(values: &[f64; 3], nverts: usize, level: f64) -> bool {
    let lo = values[..nverts].iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values[..nverts].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo < level && level < hi
}

/// Quadrature points for element `e`, cut along every level of every field
/// in `cuts`. Without cuts this is the plain degree-5 rule.
pub fn element_points(mesh: &Mesh, e: usize, cuts: &[LevelCut<'_>]) -> Vec<QuadPoint> {
    if mesh.dim() == 1 {
        points_1d(mesh.measure(e), cuts)
    } else {
        points_2d(mesh.measure(e), cuts)
    }
}

fn points_1d(len: f64, cuts: &[LevelCut<'_>]) -> Vec<QuadPoint> {
    let mut breaks = vec![0.0, 1.0];
    for cut in cuts {
        let [f0, f1, _] = cut.values;
        for &t in cut.levels {
            if strictly_straddles(&cut.values, 2, t) {
                breaks.push((t - f0) / (f1 - f0));
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut out = Vec::with_capacity(3 * (breaks.len() - 1));
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        for (x, wt) in GAUSS3_X.iter().zip(GAUSS3_W) {
            let xi = a + (b - a) * x;
            out.push(QuadPoint { bary: [1.0 - xi, xi, 0.0], weight: wt * (b - a) * len });
        }
    }
    out
}

type Polygon = Vec<[f64; 3]>;

/// Area in the reference (λ1, λ2) plane.
fn ref_area(poly: &Polygon) -> f64 {
    let n = poly.len();
    let mut twice = 0.0;
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        twice += p[1] * q[2] - q[1] * p[2];
    }
    0.5 * twice.abs()
}

/// Splits a convex polygon by the sign of the affine function `g`.
fn split(poly: &Polygon, g: &[f64]) -> (Polygon, Polygon) {
    let mut below = Vec::with_capacity(poly.len() + 1);
    let mut above = Vec::with_capacity(poly.len() + 1);
    let n = poly.len();
    for k in 0..n {
        let (p, gp) = (poly[k], g[k]);
        let (q, gq) = (poly[(k + 1) % n], g[(k + 1) % n]);
        if gp <= 0.0 {
            below.push(p);
        }
        if gp >= 0.0 {
            above.push(p);
        }
        if (gp < 0.0 && gq > 0.0) || (gp > 0.0 && gq < 0.0) {
            let s = gp / (gp - gq);
            let x = [
                p[0] + s * (q[0] - p[0]),
                p[1] + s * (q[1] - p[1]),
                p[2] + s * (q[2] - p[2]),
            ];
            below.push(x);
            above.push(x);
        }
    }
    (below, above)
}

fn points_2d(area: f64, cuts: &[LevelCut<'_>]) -> Vec<QuadPoint> {
    let mut polys: Vec<Polygon> = vec![vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
    for cut in cuts {
        for &t in cut.levels {
            if !strictly_straddles(&cut.values, 3, t) {
                continue;
            }
            let mut next = Vec::with_capacity(polys.len() + 1);
            for poly in polys {
                let g: Vec<f64> = poly
                    .iter()
                    .map(|v| v[0] * cut.values[0] + v[1] * cut.values[1] + v[2] * cut.values[2] - t)
                    .collect();
                if g.iter().all(|&x| x <= 0.0) || g.iter().all(|&x| x >= 0.0) {
                    next.push(poly);
                    continue;
                }
                let (below, above) = split(&poly, &g);
                for part in [below, above] {
                    if part.len() >= 3 && ref_area(&part) > 0.0 {
                        next.push(part);
                    }
                }
            }
            polys = next;
        }
    }
    let rule = triangle_rule();
    let mut out = Vec::with_capacity(7 * polys.len());
    for poly in &polys {
        let v0 = poly[0];
        for k in 1..poly.len() - 1 {
            let tri = vec![v0, poly[k], poly[k + 1]];
            let frac = ref_area(&tri) / 0.5;
            if frac <= 0.0 {
                continue;
            }
            for (mu, w) in &rule {
                let mut bary = [0.0; 3];
                for (j, vert) in tri.iter().enumerate() {
                    for c in 0..3 {
                        bary[c] += mu[j] * vert[c];
                    }
                }
                out.push(QuadPoint { bary, weight: w * frac * area });
            }
        }
    }
    out
}
