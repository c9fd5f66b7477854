//! Local log-polynomial likelihood density estimation in the probit
//! domain, and the improved copula density estimators built on it.
//!
//! The local objective at a point `x` is
//! `Σᵢ 𝒦(H^{-1/2}zᵢ) P_a(zᵢ) − n ∫ 𝒦(H^{-1/2}z) exp(P_a(z)) dz` with
//! `zᵢ = xᵢ − x`, `𝒦(y) = exp(−‖y‖²/2)` and `P_a` a polynomial of degree
//! one or two. With a Gaussian kernel the integral is a Gaussian integral,
//! so the objective, its gradient and its Hessian are available in closed
//! form and Newton's method applies directly.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bandwidth::{BandwidthMatrix, Whitener};
use crate::error::{domain, Error, Result};
use crate::estimator::{CopulaDensityEstimator, Smoothing};
use crate::kde::{check_open_unit, NORMALIZATION_GRID};
use crate::normal::{normal_pdf, probit_unchecked};
use crate::select::{select_fixed, select_knn, SmoothingSelection};
use crate::transforms::{transform, PseudoSample, TransformedSample};

/// Newton iteration cap.
pub const MAX_ITERATIONS: usize = 100;

/// Convergence threshold on the gradient, relative to the total local weight.
pub(crate) const GRADIENT_TOLERANCE: f64 = 1e-10;

/// Number of kernel standard deviations spanned by the nearest-neighbour
/// radius `D_k`.
pub const KNN_KERNEL_SCALE: f64 = 2.5;

/// Probit grid nodes per axis for [`ImprovedEstimator::renormalize`].
pub const NORMALIZATION_NODES: usize = 65;

/// Kernel weights `exp(−e)` with `e` beyond this are treated as no data.
const NEGLIGIBLE_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Degree {
    /// Local log-linear.
    Linear,
    /// Local log-quadratic.
    Quadratic,
}

impl Degree {
    pub fn order(self) -> usize {
        match self {
            Degree::Linear => 1,
            Degree::Quadratic => 2,
        }
    }

    pub fn from_order(p: usize) -> Result<Self> {
        match p {
            1 => Ok(Degree::Linear),
            2 => Ok(Degree::Quadratic),
            _ => Err(Error::InvalidParameter(format!("polynomial degree must be 1 or 2, got {p}"))),
        }
    }

    /// Number of polynomial coefficients in two dimensions.
    pub fn n_coefficients(self) -> usize {
        match self {
            Degree::Linear => 3,
            Degree::Quadratic => 6,
        }
    }
}

/// A converged (or best-effort) local polynomial fit.
///
/// Coefficients follow `a₀ + a₁z₁ + a₂z₂ + a₃z₁² + a₄z₂² + a₅z₁z₂` in the
/// coordinates of the data, `z = x − at`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub degree: Degree,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl LocalFit {
    /// Local density estimate `exp(a₀)`.
    pub fn density(&self) -> f64 {
        self.coefficients[0].exp()
    }
}

// ---------------------------------------------------------------------------
// Closed-form Newton solver in whitened coordinates.

/// Monomial exponents `(i, j)` for `y₁ⁱ y₂ʲ`.
const BASIS_1D_1: [(usize, usize); 2] = [(0, 0), (1, 0)];
const BASIS_1D_2: [(usize, usize); 3] = [(0, 0), (1, 0), (2, 0)];
const BASIS_2D_1: [(usize, usize); 3] = [(0, 0), (1, 0), (0, 1)];
const BASIS_2D_2: [(usize, usize); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)];

pub(crate) fn basis(dim: usize, degree: Degree) -> &'static [(usize, usize)] {
    match (dim, degree) {
        (1, Degree::Linear) => &BASIS_1D_1,
        (1, Degree::Quadratic) => &BASIS_1D_2,
        (_, Degree::Linear) => &BASIS_2D_1,
        (_, Degree::Quadratic) => &BASIS_2D_2,
    }
}

/// Local sufficient statistics: the shifted weighted monomial sums
/// `mₖ = Σᵢ exp(shift − ½‖yᵢ‖²) Bₖ(yᵢ)` in whitened coordinates.
#[derive(Debug, Clone)]
pub(crate) struct LocalStats {
    pub dim: usize,
    pub degree: Degree,
    pub m: [f64; 6],
    /// `n |L|`, the factor in front of the integral term.
    pub scale: f64,
    /// Smallest `½‖yᵢ‖²`; the weights above are multiplied by `e^{shift}`.
    pub shift: f64,
}

impl LocalStats {
    /// Accumulates statistics from whitened offsets.
    pub(crate) fn accumulate(
        dim: usize,
        degree: Degree,
        scale: f64,
        offsets: impl Iterator<Item = (f64, f64)> + Clone,
    ) -> Self {
        let shift = offsets
            .clone()
            .map(|(a, b)| 0.5 * (a * a + b * b))
            .fold(f64::INFINITY, f64::min);
        let mut m = [0.0; 6];
        let quad = degree == Degree::Quadratic;
        for (a, b) in offsets {
            let w = (shift - 0.5 * (a * a + b * b)).exp();
            m[0] += w;
            m[1] += w * a;
            if dim == 1 {
                if quad {
                    m[2] += w * a * a;
                }
            } else {
                m[2] += w * b;
                if quad {
                    m[3] += w * a * a;
                    m[4] += w * b * b;
                    m[5] += w * a * b;
                }
            }
        }
        Self { dim, degree, m, scale, shift }
    }

    pub(crate) fn negligible(&self) -> bool {
        !(self.shift <= NEGLIGIBLE_EXPONENT)
    }
}

/// Gaussian quantities of the integral term at `a`.
struct Integral {
    /// `ln ∫ exp(−½‖y‖² + P_a(y)) dy`.
    ln_value: f64,
    /// `E[Bₖ]` under the tilted Gaussian.
    mean: [f64; 6],
    /// `E[Bₖ Bₗ]`.
    second: [[f64; 6]; 6],
}

fn integral(dim: usize, degree: Degree, a: &[f64], want_moments: bool) -> Option<Integral> {
    let (b, q): ([f64; 2], [[f64; 2]; 2]) = match (dim, degree) {
        (1, Degree::Linear) => ([a[1], 0.0], [[0.0; 2]; 2]),
        (1, Degree::Quadratic) => ([a[1], 0.0], [[a[2], 0.0], [0.0, 0.0]]),
        (_, Degree::Linear) => ([a[1], a[2]], [[0.0; 2]; 2]),
        (_, Degree::Quadratic) => ([a[1], a[2]], [[a[3], 0.5 * a[5]], [0.5 * a[5], a[4]]]),
    };
    // P = I − 2Q must be positive definite for the integral to converge.
    let p11 = 1.0 - 2.0 * q[0][0];
    let (det, sigma, mu);
    if dim == 1 {
        if !(p11 > 0.0) {
            return None;
        }
        det = p11;
        sigma = [[1.0 / p11, 0.0], [0.0, 0.0]];
        mu = [b[0] / p11, 0.0];
    } else {
        let p22 = 1.0 - 2.0 * q[1][1];
        let p12 = -2.0 * q[0][1];
        det = p11 * p22 - p12 * p12;
        if !(p11 > 0.0 && det > 0.0) {
            return None;
        }
        sigma = [[p22 / det, -p12 / det], [-p12 / det, p11 / det]];
        mu = [
            sigma[0][0] * b[0] + sigma[0][1] * b[1],
            sigma[1][0] * b[0] + sigma[1][1] * b[1],
        ];
    }
    let ln_value = a[0] + 0.5 * dim as f64 * (2.0 * PI).ln() - 0.5 * det.ln()
        + 0.5 * (b[0] * mu[0] + b[1] * mu[1]);
    if !ln_value.is_finite() {
        return None;
    }
    let mut out = Integral { ln_value, mean: [0.0; 6], second: [[0.0; 6]; 6] };
    if !want_moments {
        return Some(out);
    }
    // Raw Gaussian moments E[y₁ⁱ y₂ʲ], i + j ≤ 4, by the standard recursion.
    let mut mom = [[0.0f64; 5]; 5];
    mom[0][0] = 1.0;
    for i in 0..4 {
        let prev = if i > 0 { mom[i - 1][0] } else { 0.0 };
        mom[i + 1][0] = mu[0] * mom[i][0] + i as f64 * sigma[0][0] * prev;
    }
    for i in 0..5 {
        for j in 0..(4 - i) {
            let left = if i > 0 { mom[i - 1][j] } else { 0.0 };
            let down = if j > 0 { mom[i][j - 1] } else { 0.0 };
            mom[i][j + 1] =
                mu[1] * mom[i][j] + i as f64 * sigma[0][1] * left + j as f64 * sigma[1][1] * down;
        }
    }
    let exps = basis(dim, degree);
    for (k, &(i, j)) in exps.iter().enumerate() {
        out.mean[k] = mom[i][j];
        for (l, &(i2, j2)) in exps.iter().enumerate() {
            out.second[k][l] = mom[i + i2][j + j2];
        }
    }
    Some(out)
}

fn objective(stats: &LocalStats, a: &[f64]) -> f64 {
    match integral(stats.dim, stats.degree, a, false) {
        Some(int) => {
            let data: f64 = stats.m.iter().zip(a).map(|(m, a)| m * a).sum();
            data - stats.scale * int.ln_value.exp()
        }
        None => f64::NEG_INFINITY,
    }
}

/// Solves `A x = b` for a small symmetric positive-definite `A` by Cholesky.
fn solve_spd(a: &[[f64; 6]; 6], b: &[f64; 6], k: usize) -> Option<[f64; 6]> {
    let mut l = [[0.0f64; 6]; 6];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i][j];
            for p in 0..j {
                s -= l[i][p] * l[j][p];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; 6];
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i][p] * y[p];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; 6];
    for i in (0..k).rev() {
        let mut s = y[i];
        for p in (i + 1)..k {
            s -= l[p][i] * x[p];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

/// Result of the whitened-coordinate solve; `a[0]` still carries the shift.
pub(crate) struct Solution {
    pub a: [f64; 6],
    pub converged: bool,
    pub iterations: usize,
}

/// Damped Newton ascent on the concave local objective, started from the
/// local constant fit (the kernel density estimate).
pub(crate) fn solve(stats: &LocalStats) -> Solution {
    let k = basis(stats.dim, stats.degree).len();
    let mut a = [0.0; 6];
    a[0] = (stats.m[0] / (stats.scale * (2.0 * PI).powf(0.5 * stats.dim as f64))).ln();
    let tol = GRADIENT_TOLERANCE * stats.m[0];
    let mut current = objective(stats, &a);
    for iter in 0..MAX_ITERATIONS {
        let Some(int) = integral(stats.dim, stats.degree, &a, true) else {
            break;
        };
        let mass = stats.scale * int.ln_value.exp();
        let mut grad = [0.0; 6];
        let mut hess = [[0.0; 6]; 6];
        for r in 0..k {
            grad[r] = stats.m[r] - mass * int.mean[r];
            for c in 0..k {
                hess[r][c] = mass * int.second[r][c];
            }
        }
        if grad[..k].iter().all(|g| g.abs() <= tol) {
            return Solution { a, converged: true, iterations: iter };
        }
        let Some(step) = solve_spd(&hess, &grad, k) else {
            break;
        };
        let mut t = 1.0;
        let slack = 1e-13 * (current.abs() + stats.m[0]);
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = a;
            for r in 0..k {
                trial[r] += t * step[r];
            }
            let value = objective(stats, &trial);
            if value.is_finite() && value >= current - slack {
                a = trial;
                current = value.max(current);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // One last check: the final accepted iterate may already satisfy the tolerance.
    let converged = integral(stats.dim, stats.degree, &a, true).is_some_and(|int| {
        let mass = stats.scale * int.ln_value.exp();
        (0..k).all(|r| (stats.m[r] - mass * int.mean[r]).abs() <= tol)
    });
    Solution { a, converged, iterations: MAX_ITERATIONS }
}

// ---------------------------------------------------------------------------
// Bivariate fits.

/// Local objective evaluated directly in data coordinates; `−∞` where the
/// integral diverges.
pub fn loclik_objective(
    ts: &TransformedSample,
    h: &BandwidthMatrix,
    degree: Degree,
    at: (f64, f64),
    a: &[f64],
) -> Result<f64> {
    if a.len() != degree.n_coefficients() {
        return Err(Error::InvalidParameter(format!(
            "expected {} coefficients, got {}",
            degree.n_coefficients(),
            a.len()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("coefficients must be finite".into()));
    }
    let poly = |z1: f64, z2: f64| {
        let mut v = a[0] + a[1] * z1 + a[2] * z2;
        if degree == Degree::Quadratic {
            v += a[3] * z1 * z1 + a[4] * z2 * z2 + a[5] * z1 * z2;
        }
        v
    };
    let hinv = h.inverse();
    let data: f64 = ts
        .points()
        .map(|(s, t)| {
            let (z1, z2) = (s - at.0, t - at.1);
            let e = hinv[0][0] * z1 * z1 + 2.0 * hinv[0][1] * z1 * z2 + hinv[1][1] * z2 * z2;
            (-0.5 * e).exp() * poly(z1, z2)
        })
        .sum();
    // ∫ exp(−½zᵀH⁻¹z + P_a(z)) dz with P = H⁻¹ − 2Q.
    let (q11, q22, q12) = match degree {
        Degree::Linear => (0.0, 0.0, 0.0),
        Degree::Quadratic => (a[3], a[4], 0.5 * a[5]),
    };
    let p11 = hinv[0][0] - 2.0 * q11;
    let p22 = hinv[1][1] - 2.0 * q22;
    let p12 = hinv[0][1] - 2.0 * q12;
    let det = p11 * p22 - p12 * p12;
    if !(p11 > 0.0 && det > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let (b1, b2) = (a[1], a[2]);
    let quad = (p22 * b1 * b1 - 2.0 * p12 * b1 * b2 + p11 * b2 * b2) / det;
    let int = a[0].exp() * 2.0 * PI / det.sqrt() * (0.5 * quad).exp();
    Ok(data - ts.len() as f64 * int)
}

fn fit_with_matrix(
    ts: &TransformedSample,
    h: &BandwidthMatrix,
    degree: Degree,
    at: (f64, f64),
) -> Result<LocalFit> {
    let w = Whitener::new(h);
    let offsets = ts.s().iter().zip(ts.t()).map(|(&s, &t)| w.apply(s - at.0, t - at.1));
    let stats = LocalStats::accumulate(2, degree, ts.len() as f64 * w.det(), offsets);
    if stats.negligible() {
        return Err(Error::NoLocalData { s: at.0, t: at.1 });
    }
    let sol = solve(&stats);
    // Back from whitened y = M z (M = L⁻¹) to data coordinates.
    let m = w.inverse();
    let by = [sol.a[1], sol.a[2]];
    let mut coef = vec![
        sol.a[0] - stats.shift,
        m[0][0] * by[0] + m[1][0] * by[1],
        m[0][1] * by[0] + m[1][1] * by[1],
    ];
    if degree == Degree::Quadratic {
        let qy = [[sol.a[3], 0.5 * sol.a[5]], [0.5 * sol.a[5], sol.a[4]]];
        let mut qz = [[0.0; 2]; 2];
        for (r, row) in qz.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        *cell += m[i][r] * qy[i][j] * m[j][c];
                    }
                }
            }
        }
        coef.extend_from_slice(&[qz[0][0], qz[1][1], qz[0][1] + qz[1][0]]);
    }
    Ok(LocalFit { degree, coefficients: coef, converged: sol.converged, iterations: sol.iterations })
}

/// Nearest-neighbour bandwidth. Principal scores are divided by `scales`
/// `(σ_q, σ_r)`; at a point `(q, r)` in those units `D_k` is the `k`th
/// smallest `√((q−q̂ᵢ)² + κ²(r−r̂ᵢ)²)` and the kernel matrix is
/// `(D_k/c)² diag(σ_q², σ_r²/κ²)` in principal coordinates, with
/// `c =` [`KNN_KERNEL_SCALE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnBandwidth {
    k: usize,
    kappa: f64,
    /// Rows are the principal axes.
    w: [[f64; 2]; 2],
    center: [f64; 2],
    /// Standard deviations of the principal scores.
    #[serde(default = "unit_scales")]
    scales: [f64; 2],
}

fn unit_scales() -> [f64; 2] {
    [1.0, 1.0]
}

impl KnnBandwidth {
    pub fn new(k: usize, kappa: f64, w: [[f64; 2]; 2], center: [f64; 2]) -> Result<Self> {
        if k < 2 {
            return Err(domain("k", k as f64, "need at least 2 neighbours"));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(domain("kappa", kappa, "direction weight must be positive"));
        }
        for i in 0..2 {
            for j in 0..2 {
                let dot = w[i][0] * w[j][0] + w[i][1] * w[j][1];
                if (dot - if i == j { 1.0 } else { 0.0 }).abs() > 1e-12 {
                    return Err(Error::InvalidParameter("rotation must be orthonormal".into()));
                }
            }
        }
        Ok(Self { k, kappa, w, center, scales: unit_scales() })
    }

    /// Measures distances on principal scores divided by `scales`.
    pub fn with_scales(mut self, scales: [f64; 2]) -> Result<Self> {
        if !scales.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidParameter(format!("score scales must be positive, got {scales:?}")));
        }
        self.scales = scales;
        Ok(self)
    }

    pub fn scales(&self) -> [f64; 2] {
        self.scales
    }

    /// Unrotated axes centred at the origin.
    pub fn axis_aligned(k: usize, kappa: f64) -> Result<Self> {
        Self::new(k, kappa, [[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rotation(&self) -> [[f64; 2]; 2] {
        self.w
    }

    /// Principal-axis coordinates of `(s, t)`.
    pub fn rotate(&self, s: f64, t: f64) -> (f64, f64) {
        let (x, y) = (s - self.center[0], t - self.center[1]);
        (self.w[0][0] * x + self.w[0][1] * y, self.w[1][0] * x + self.w[1][1] * y)
    }

    /// The local matrix at `at`, expressed in the sample's coordinates.
    pub fn local_matrix(&self, ts: &TransformedSample, at: (f64, f64)) -> Result<BandwidthMatrix> {
        if self.k > ts.len() {
            return Err(domain("k", self.k as f64, "more neighbours than observations"));
        }
        let (q0, r0) = self.rotate(at.0, at.1);
        let k2 = self.kappa * self.kappa;
        let mut d2: Vec<f64> = ts
            .points()
            .map(|(s, t)| {
                let (q, r) = self.rotate(s, t);
                let (dq, dr) = ((q - q0) / self.scales[0], (r - r0) / self.scales[1]);
                dq * dq + k2 * dr * dr
            })
            .collect();
        let (_, dk2, _) = d2.select_nth_unstable_by(self.k - 1, f64::total_cmp);
        let dk2 = *dk2;
        if !(dk2 > 0.0) {
            return Err(Error::Degenerate(format!(
                "{} observations coincide with ({}, {})",
                self.k, at.0, at.1
            )));
        }
        let dk2 = dk2 / (KNN_KERNEL_SCALE * KNN_KERNEL_SCALE);
        let [sq, sr] = self.scales;
        BandwidthMatrix::from_rotated(self.w, [dk2 * sq * sq, dk2 * sr * sr / k2])
    }
}

/// `k`th smallest `√((q−q̂ᵢ)² + κ²(r−r̂ᵢ)²)`.
pub fn knn_distance(q: &[f64], r: &[f64], kappa: f64, k: usize, at: (f64, f64)) -> Result<f64> {
    if q.len() != r.len() {
        return Err(Error::InvalidParameter("score vectors differ in length".into()));
    }
    if k == 0 || k > q.len() {
        return Err(domain("k", k as f64, "must satisfy 1 <= k <= n"));
    }
    if !(kappa > 0.0) {
        return Err(domain("kappa", kappa, "direction weight must be positive"));
    }
    let k2 = kappa * kappa;
    let mut d2: Vec<f64> = q
        .iter()
        .zip(r)
        .map(|(&a, &b)| (a - at.0) * (a - at.0) + k2 * (b - at.1) * (b - at.1))
        .collect();
    let (_, kth, _) = d2.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(kth.sqrt())
}

/// A fixed matrix or a nearest-neighbour rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthSpec {
    Fixed(BandwidthMatrix),
    Knn(KnnBandwidth),
}

impl From<BandwidthMatrix> for BandwidthSpec {
    fn from(h: BandwidthMatrix) -> Self {
        BandwidthSpec::Fixed(h)
    }
}

impl From<KnnBandwidth> for BandwidthSpec {
    fn from(k: KnnBandwidth) -> Self {
        BandwidthSpec::Knn(k)
    }
}

/// Maximizes the local objective at `at` (data coordinates).
pub fn loclik_fit_point(
    ts: &TransformedSample,
    bw: &BandwidthSpec,
    degree: Degree,
    at: (f64, f64),
) -> Result<LocalFit> {
    let h = match bw {
        BandwidthSpec::Fixed(h) => *h,
        BandwidthSpec::Knn(k) => k.local_matrix(ts, at)?,
    };
    fit_with_matrix(ts, &h, degree, at)
}

/// Improved probit-transformation estimate `exp(ã₀) / (φ(s) φ(t))` at
/// `(s, t) = (Φ⁻¹(u), Φ⁻¹(v))`.
pub fn improved_estimate(
    ts: &TransformedSample,
    bw: &BandwidthSpec,
    degree: Degree,
    u: f64,
    v: f64,
) -> Result<f64> {
    check_open_unit(u, v)?;
    let (s, t) = (probit_unchecked(u), probit_unchecked(v));
    let fit = loclik_fit_point(ts, bw, degree, (s, t))?;
    Ok((fit.coefficients[0] - ln_phi(s) - ln_phi(t)).exp())
}

fn ln_phi(x: f64) -> f64 {
    normal_pdf(0.0).ln() - 0.5 * x * x
}

/// Fitted improved estimator.
#[derive(Debug, Clone)]
pub struct ImprovedEstimator {
    ts: TransformedSample,
    degree: Degree,
    bandwidth: BandwidthSpec,
    selection: Option<SmoothingSelection>,
    norm: f64,
}

impl ImprovedEstimator {
    pub fn new(ts: TransformedSample, degree: Degree, bandwidth: BandwidthSpec) -> Self {
        Self { ts, degree, bandwidth, selection: None, norm: 1.0 }
    }

    /// Transforms the pseudo-observations and selects the bandwidth.
    pub fn fit(ps: &PseudoSample, degree: Degree, smoothing: Smoothing) -> Result<Self> {
        let ts = transform(ps);
        let (bandwidth, selection) = match smoothing {
            Smoothing::Isotropic(h) => (BandwidthMatrix::isotropic(h)?.into(), None),
            Smoothing::Fixed => {
                let sel = select_fixed(&ts, degree)?;
                (sel.bandwidth_spec(), Some(sel))
            }
            Smoothing::Knn => {
                let sel = select_knn(&ts, degree)?;
                (sel.bandwidth_spec(), Some(sel))
            }
        };
        Ok(Self { ts, degree, bandwidth, selection, norm: 1.0 })
    }

    /// Divides by the integral of the raw surface under the midpoint rule
    /// on the [`NORMALIZATION_GRID`] interior lattice, the quadrature that
    /// normalizes the amended estimator. The raw surface loses mass with the
    /// bandwidth (for `p = 1` by the factor `exp(−½ ∇ᵀ H ∇)` in the
    /// log-density slope `∇`). `ã₀` is fitted on a
    /// [`NORMALIZATION_NODES`]-square probit grid spanning the lattice and
    /// interpolated bilinearly, being smooth there; nodes without local data
    /// count as zero density.
    pub fn renormalize(mut self) -> Result<Self> {
        let (n, m) = (NORMALIZATION_GRID, NORMALIZATION_NODES);
        let outer = probit_unchecked(1.0 - 0.5 / n as f64);
        let step = 2.0 * outer / (m - 1) as f64;
        let node = |i: usize| -outer + i as f64 * step;
        let log_f = (0..m * m)
            .into_par_iter()
            .map(|idx| match loclik_fit_point(&self.ts, &self.bandwidth, self.degree, (node(idx / m), node(idx % m))) {
                Ok(fit) => Ok(fit.coefficients[0]),
                Err(Error::NoLocalData { .. }) => Ok(-NEGLIGIBLE_EXPONENT),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<f64>>>()?;
        // Lattice node → (cell, offset within cell, log φ).
        let axis: Vec<(usize, f64, f64)> = (0..n)
            .map(|i| {
                let s = probit_unchecked((i as f64 + 0.5) / n as f64);
                let x = ((s + outer) / step).clamp(0.0, (m - 1) as f64);
                let j = (x.floor() as usize).min(m - 2);
                (j, x - j as f64, ln_phi(s))
            })
            .collect();
        let norm = axis
            .par_iter()
            .map(|&(i, wi, pi)| {
                let row = |k: usize| &log_f[k * m..(k + 1) * m];
                let (r0, r1) = (row(i), row(i + 1));
                axis.iter()
                    .map(|&(j, wj, pj)| {
                        let lo = r0[j] + wj * (r0[j + 1] - r0[j]);
                        let hi = r1[j] + wj * (r1[j + 1] - r1[j]);
                        (lo + wi * (hi - lo) - pi - pj).exp()
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / (n * n) as f64;
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Degenerate("local likelihood surface has no mass".into()));
        }
        self.norm = norm;
        Ok(self)
    }

    /// Divisor applied to the raw surface; 1 unless renormalized.
    pub fn normalizing_constant(&self) -> f64 {
        self.norm
    }

    pub fn selection(&self) -> Option<&SmoothingSelection> {
        self.selection.as_ref()
    }

    pub fn bandwidth(&self) -> &BandwidthSpec {
        &self.bandwidth
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }
}

impl CopulaDensityEstimator for ImprovedEstimator {
    fn density(&self, u: f64, v: f64) -> Result<f64> {
        Ok(improved_estimate(&self.ts, &self.bandwidth, self.degree, u, v)? / self.norm)
    }

    fn describe(&self) -> serde_json::Value {
        json!({
            "degree": self.degree.order(),
            "bandwidth": self.bandwidth,
            "selection": self.selection,
            "normalizing_constant": self.norm,
        })
    }
}
