//! Finitely piecewise-C² scalar coefficients.
//!
//! A coefficient `a: R -> R` is stored as `K` strictly increasing breakpoints
//! `t_1 < ... < t_K` and `K + 1` polynomial selections `a_0, ..., a_K`. The
//! selection `a_i` is active on the half-open interval `(t_i, t_{i+1}]` with
//! the conventions `t_0 = -inf` and `t_{K+1} = +inf`, so a breakpoint itself
//! belongs to the piece on its left.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported polynomial degree for a single piece.
pub const MAX_DEGREE: usize = 4;

const CONTINUITY_TOL: f64 = 1e-12;
const NONNEG_TOL: f64 = 1e-12;

/// A polynomial `c_0 + c_1 t + ... + c_d t^d` with `d <= 4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolynomialPiece {
    coeffs: Vec<f64>,
}

impl PolynomialPiece {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() > MAX_DEGREE + 1 {
            return Err(Error::InvalidCoefficient(format!(
                "piece of degree {} exceeds the supported maximum {MAX_DEGREE}",
                coeffs.len() - 1
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidCoefficient("non-finite polynomial coefficient".into()));
        }
        let coeffs = if coeffs.is_empty() { vec![0.0] } else { coeffs };
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * t + k as f64 * c;
        }
        acc
    }

    pub fn second_deriv(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(2).rev() {
            acc = acc * t + (k * (k - 1)) as f64 * c;
        }
        acc
    }

    /// Antiderivative vanishing at zero.
    pub fn primitive(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * t + c / (k + 1) as f64;
        }
        acc * t
    }

    /// Roots of the first derivative inside `[lo, hi]`, located by sign scan
    /// plus bisection. Used for the non-negativity check only.
    fn critical_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        const SAMPLES: usize = 512;
        let mut out = Vec::new();
        if self.degree() < 2 || !(hi > lo) {
            return out;
        }
        let step = (hi - lo) / SAMPLES as f64;
        let mut a = lo;
        let mut fa = self.deriv(a);
        for k in 1..=SAMPLES {
            let b = if k == SAMPLES { hi } else { lo + k as f64 * step };
            let fb = self.deriv(b);
            if fa == 0.0 {
                out.push(a);
            } else if fa * fb < 0.0 {
                let (mut l, mut r, mut fl) = (a, b, fa);
                for _ in 0..80 {
                    let m = 0.5 * (l + r);
                    let fm = self.deriv(m);
                    if fm == 0.0 {
                        l = m;
                        r = m;
                        break;
                    }
                    if fl * fm < 0.0 {
                        r = m;
                    } else {
                        l = m;
                        fl = fm;
                    }
                }
                out.push(0.5 * (l + r));
            }
            a = b;
            fa = fb;
        }
        out
    }
}

impl TryFrom<Vec<f64>> for PolynomialPiece {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PolynomialPiece> for Vec<f64> {
    fn from(p: PolynomialPiece) -> Self {
        p.coeffs
    }
}

/// Serialized form: `{ "breakpoints": [...], "pieces": [[c0, c1, ...], ...],
/// "working_range": [lo, hi] }` with an optional `"delta"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pc2CoefficientDef {
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<Vec<f64>>,
    pub working_range: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Non-negative finitely PC² function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Pc2CoefficientDef", into = "Pc2CoefficientDef")]
pub struct Pc2Coefficient {
    breakpoints: Vec<f64>,
    pieces: Vec<PolynomialPiece>,
    sigmas: Vec<f64>,
    delta: f64,
    working_range: [f64; 2],
}

impl Pc2Coefficient {
    /// Builds and validates a coefficient. `delta` defaults to half the
    /// smallest interior gap, or `1.0` when there is no interior gap.
    pub fn new(
        breakpoints: Vec<f64>,
        pieces: Vec<PolynomialPiece>,
        working_range: [f64; 2],
        delta: Option<f64>,
    ) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidCoefficient(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidCoefficient("non-finite breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidCoefficient("breakpoints must be strictly increasing".into()));
        }
        let [lo, hi] = working_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidCoefficient(format!("invalid working range [{lo}, {hi}]")));
        }
        for (i, &t) in breakpoints.iter().enumerate() {
            let left = pieces[i].value(t);
            let right = pieces[i + 1].value(t);
            if (left - right).abs() > CONTINUITY_TOL {
                return Err(Error::InvalidCoefficient(format!(
                    "pieces {i} and {} disagree at breakpoint {t}: {left} vs {right}",
                    i + 1
                )));
            }
        }
        let sigmas = breakpoints
            .iter()
            .enumerate()
            .map(|(i, &t)| (pieces[i].deriv(t) - pieces[i + 1].deriv(t)).abs())
            .collect();

        let max_delta = breakpoints
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]))
            .fold(f64::INFINITY, f64::min);
        let delta = match delta {
            Some(d) => {
                if !(d > 0.0) || d > max_delta {
                    return Err(Error::InvalidCoefficient(format!(
                        "delta {d} must lie in (0, {max_delta}]"
                    )));
                }
                d
            }
            None if max_delta.is_finite() => max_delta,
            None => 1.0,
        };

        let coef = Self { breakpoints, pieces, sigmas, delta, working_range };
        coef.check_nonnegative()?;
        Ok(coef)
    }

    /// Convenience constructor from raw coefficient vectors.
    pub fn from_raw(
        breakpoints: Vec<f64>,
        pieces: Vec<Vec<f64>>,
        working_range: [f64; 2],
    ) -> Result<Self> {
        let pieces = pieces.into_iter().map(PolynomialPiece::new).collect::<Result<Vec<_>>>()?;
        Self::new(breakpoints, pieces, working_range, None)
    }

    /// `a ≡ c` for a constant `c >= 0`.
    pub fn constant(c: f64) -> Result<Self> {
        Self::from_raw(vec![], vec![vec![c]], [-1e3, 1e3])
    }

    /// `a(t) = |t - t0|`.
    pub fn abs_shifted(t0: f64) -> Result<Self> {
        Self::from_raw(vec![t0], vec![vec![t0, -1.0], vec![-t0, 1.0]], [-1e3, 1e3])
    }

    /// `a(t) = slope * max(0, t - t0)` for `slope >= 0`.
    pub fn ramp(t0: f64, slope: f64) -> Result<Self> {
        Self::from_raw(vec![t0], vec![vec![0.0], vec![-slope * t0, slope]], [-1e3, 1e3])
    }

    fn check_nonnegative(&self) -> Result<()> {
        let [lo, hi] = self.working_range;
        let n = self.pieces.len();
        for i in 0..n {
            let a = if i == 0 { lo } else { self.breakpoints[i - 1].max(lo) };
            let b = if i == n - 1 { hi } else { self.breakpoints[i].min(hi) };
            if a > b {
                continue;
            }
            let piece = &self.pieces[i];
            let mut candidates = vec![a, b];
            candidates.extend(piece.critical_points(a, b));
            const DENSE: usize = 256;
            candidates.extend((0..=DENSE).map(|k| a + (b - a) * k as f64 / DENSE as f64));
            if let Some(t) = candidates.into_iter().find(|&t| piece.value(t) < -NONNEG_TOL) {
                return Err(Error::InvalidCoefficient(format!(
                    "coefficient is negative at t = {t} (value {})",
                    piece.value(t)
                )));
            }
        }
        Ok(())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[PolynomialPiece] {
        &self.pieces
    }

    pub fn piece(&self, i: usize) -> &PolynomialPiece {
        &self.pieces[i]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn working_range(&self) -> [f64; 2] {
        self.working_range
    }

    pub fn num_breakpoints(&self) -> usize {
        self.breakpoints.len()
    }

    /// `sigma_i` recomputed from the pieces (1-based breakpoint index `i`).
    pub fn recompute_sigma(&self, i: usize) -> f64 {
        let t = self.breakpoints[i - 1];
        (self.pieces[i - 1].deriv(t) - self.pieces[i].deriv(t)).abs()
    }

    /// Index of the piece active at `t`, i.e. the unique `i` with
    /// `t ∈ (t_i, t_{i+1}]`.
    pub fn piece_index(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b < t)
    }

    /// True when `t` equals a breakpoint exactly.
    pub fn is_exceptional(&self, t: f64) -> bool {
        self.breakpoints.binary_search_by(|b| b.total_cmp(&t)).is_ok()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.pieces[self.piece_index(t)].value(t)
    }

    /// Directional derivative `a'(t; h)`.
    pub fn dir_deriv(&self, t: f64, h: f64) -> f64 {
        if h == 0.0 {
            return 0.0;
        }
        let i = self.piece_index(t);
        if i < self.breakpoints.len() && self.breakpoints[i] == t {
            // t = t_{i+1}: a_{i+1} governs h > 0, a_i governs h < 0.
            if h > 0.0 {
                self.pieces[i + 1].deriv(t) * h
            } else {
                self.pieces[i].deriv(t) * h
            }
        } else {
            self.pieces[i].deriv(t) * h
        }
    }

    /// `1_{t ∉ E_a} a'(t)`.
    pub fn deriv_off_exceptional(&self, t: f64) -> f64 {
        if self.is_exceptional(t) {
            0.0
        } else {
            self.pieces[self.piece_index(t)].deriv(t)
        }
    }

    /// `1_{t ∉ E_a} a''(t)`.
    pub fn second_deriv(&self, t: f64) -> f64 {
        if self.is_exceptional(t) {
            0.0
        } else {
            self.pieces[self.piece_index(t)].second_deriv(t)
        }
    }

    /// `∫_0^t a(s) ds`, exact across breakpoints.
    pub fn antiderivative(&self, t: f64) -> f64 {
        if t >= 0.0 {
            self.integral(0.0, t)
        } else {
            -self.integral(t, 0.0)
        }
    }

    /// `∫_lo^hi a(s) ds` for `lo <= hi`.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        let n = self.pieces.len();
        let first = self.piece_index(lo);
        for i in first..n {
            let left = if i == 0 { f64::NEG_INFINITY } else { self.breakpoints[i - 1] };
            let right = if i == n - 1 { f64::INFINITY } else { self.breakpoints[i] };
            let a = lo.max(left);
            let b = hi.min(right);
            if a < b {
                total += self.pieces[i].primitive(b) - self.pieces[i].primitive(a);
            }
            if right >= hi {
                break;
            }
        }
        total
    }

    /// Index sets for a state with range `[y_min, y_max]`:
    /// `I_y` (pieces whose interval meets the range) and `I_y^+` (1-based
    /// breakpoint indices inside the closed range).
    pub fn index_sets(&self, y_min: f64, y_max: f64) -> (Vec<usize>, Vec<usize>) {
        debug_assert!(y_min <= y_max);
        let n = self.pieces.len();
        let i_y = (0..n)
            .filter(|&i| {
                let left = if i == 0 { f64::NEG_INFINITY } else { self.breakpoints[i - 1] };
                let right = if i == n - 1 { f64::INFINITY } else { self.breakpoints[i] };
                // (left, right] ∩ [y_min, y_max] ≠ ∅
                left < y_max && y_min <= right
            })
            .collect();
        let i_plus = self
            .breakpoints
            .iter()
            .enumerate()
            .filter(|(_, &t)| y_min <= t && t <= y_max)
            .map(|(i, _)| i + 1)
            .collect();
        (i_y, i_plus)
    }
}

impl TryFrom<Pc2CoefficientDef> for Pc2Coefficient {
    type Error = Error;
    fn try_from(def: Pc2CoefficientDef) -> Result<Self> {
        let pieces = def.pieces.into_iter().map(PolynomialPiece::new).collect::<Result<Vec<_>>>()?;
        Self::new(def.breakpoints, pieces, def.working_range, def.delta)
    }
}

impl From<Pc2Coefficient> for Pc2CoefficientDef {
    fn from(c: Pc2Coefficient) -> Self {
        Self {
            breakpoints: c.breakpoints,
            pieces: c.pieces.into_iter().map(Vec::from).collect(),
            working_range: c.working_range,
            delta: Some(c.delta),
        }
    }
}
