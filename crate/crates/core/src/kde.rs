//! Gaussian kernel density estimation in the probit domain and the naive and
//! amended copula density estimators built on it.

use std::f64::consts::PI;

use serde_json::json;

use crate::bandwidth::{BandwidthMatrix, Whitener};
use crate::error::{domain, Error, Result};
use crate::estimator::CopulaDensityEstimator;
use crate::grid::{DensityGrid, GridKind};
use crate::normal::{normal_pdf, probit_unchecked};
use crate::transforms::{PseudoSample, TransformedSample};

/// Smallest admissible amendment divisor.
pub const AMENDMENT_FLOOR: f64 = 0.1;

/// Side of the midpoint lattice used to normalize surfaces.
pub const NORMALIZATION_GRID: usize = 400;

/// `Σᵢ exp(−½‖L⁻¹(at − xᵢ)‖²)` over the points.
pub(crate) fn kernel_sum(xs: &[f64], ys: &[f64], w: &Whitener, at: (f64, f64)) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let (a, b) = w.apply(at.0 - x, at.1 - y);
            (-0.5 * (a * a + b * b)).exp()
        })
        .sum()
}

/// Bivariate Gaussian KDE `(n|H|^{1/2})⁻¹ Σ 𝒦(H^{-1/2}(z − zᵢ))`.
pub fn gaussian_kde2(ts: &TransformedSample, h: &BandwidthMatrix, at: (f64, f64)) -> f64 {
    kde_points(ts.s(), ts.t(), h, at)
}

pub(crate) fn kde_points(xs: &[f64], ys: &[f64], h: &BandwidthMatrix, at: (f64, f64)) -> f64 {
    let w = Whitener::new(h);
    kernel_sum(xs, ys, &w, at) / (2.0 * PI * w.det() * xs.len() as f64)
}

pub(crate) fn check_open_unit(u: f64, v: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(domain("u", u, "estimate requires 0 < u < 1"));
    }
    if !(v > 0.0 && v < 1.0) {
        return Err(domain("v", v, "estimate requires 0 < v < 1"));
    }
    Ok(())
}

/// Naive probit-transformation estimate: the KDE at `(Φ⁻¹(u), Φ⁻¹(v))`
/// divided by `φ(Φ⁻¹(u)) φ(Φ⁻¹(v))`.
pub fn naive_estimate(ts: &TransformedSample, h: &BandwidthMatrix, u: f64, v: f64) -> Result<f64> {
    check_open_unit(u, v)?;
    let (s, t) = (probit_unchecked(u), probit_unchecked(v));
    Ok(gaussian_kde2(ts, h, (s, t)) / (normal_pdf(s) * normal_pdf(t)))
}

/// `1 + ½[h₁²(s²−1) + 2h₁₂st + h₂²(t²−1)]`, floored at [`AMENDMENT_FLOOR`].
pub fn amendment_divisor(h: &BandwidthMatrix, s: f64, t: f64) -> f64 {
    let d = 1.0 + 0.5 * (h.h11() * (s * s - 1.0) + 2.0 * h.h12() * s * t + h.h22() * (t * t - 1.0));
    d.max(AMENDMENT_FLOOR)
}

/// Amended estimate before renormalization; see [`AmendedEstimator`] for
/// the normalized surface.
pub fn amended_estimate(ts: &TransformedSample, h: &BandwidthMatrix, u: f64, v: f64) -> Result<f64> {
    let naive = naive_estimate(ts, h, u, v)?;
    Ok(naive / amendment_divisor(h, probit_unchecked(u), probit_unchecked(v)))
}

/// Normal Reference bandwidth for arbitrary bivariate points:
/// `n^{-1/3} Σ̂`.
pub(crate) fn normal_reference_points(xs: &[f64], ys: &[f64]) -> Result<BandwidthMatrix> {
    let n = xs.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("Normal Reference rule needs n >= 3, got {n}")));
    }
    let cov = covariance(xs, ys);
    let f = (n as f64).powf(-1.0 / 3.0);
    BandwidthMatrix::new(cov[0][0] * f, cov[1][1] * f, cov[0][1] * f)
        .map_err(|_| Error::Degenerate("sample covariance is rank deficient".into()))
}

pub(crate) fn covariance(xs: &[f64], ys: &[f64]) -> [[f64; 2]; 2] {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let d = n - 1.0;
    [[sxx / d, sxy / d], [sxy / d, syy / d]]
}

/// Normal Reference rule `H = n^{-1/3} Σ̂` on the transformed sample.
pub fn normal_reference_h(ts: &TransformedSample) -> Result<BandwidthMatrix> {
    normal_reference_points(ts.s(), ts.t())
}

/// Plain product-Gaussian KDE on the unit square with bandwidth `h`, with no
/// boundary correction. It exists to exhibit the boundary bias.
pub fn unit_square_kde(ps: &PseudoSample, h: f64, u: f64, v: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(domain("h", h, "bandwidth must be positive"));
    }
    let hm = BandwidthMatrix::isotropic(h)?;
    Ok(kde_points(ps.u(), ps.v(), &hm, (u, v)))
}

/// Naive probit-transformation estimator with a fixed bandwidth.
#[derive(Debug, Clone)]
pub struct NaiveEstimator {
    ts: TransformedSample,
    h: BandwidthMatrix,
}

impl NaiveEstimator {
    pub fn new(ts: TransformedSample, h: BandwidthMatrix) -> Self {
        Self { ts, h }
    }

    /// Bandwidth from the Normal Reference rule.
    pub fn fit(ps: &PseudoSample) -> Result<Self> {
        let ts = crate::transforms::transform(ps);
        let h = normal_reference_h(&ts)?;
        Ok(Self::new(ts, h))
    }

    pub fn bandwidth(&self) -> &BandwidthMatrix {
        &self.h
    }
}

impl CopulaDensityEstimator for NaiveEstimator {
    fn density(&self, u: f64, v: f64) -> Result<f64> {
        naive_estimate(&self.ts, &self.h, u, v)
    }

    fn describe(&self) -> serde_json::Value {
        json!({ "bandwidth": self.h })
    }
}

/// Amended estimator, renormalized to integrate to one on the
/// [`NORMALIZATION_GRID`] midpoint lattice.
#[derive(Debug, Clone)]
pub struct AmendedEstimator {
    ts: TransformedSample,
    h: BandwidthMatrix,
    norm: f64,
}

impl AmendedEstimator {
    pub fn new(ts: TransformedSample, h: BandwidthMatrix) -> Result<Self> {
        let raw = DensityGrid::tabulate(NORMALIZATION_GRID, GridKind::Midpoint, |u, v| {
            amended_estimate(&ts, &h, u, v)
        })?;
        let norm = raw.integral();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Degenerate("amended surface has no mass".into()));
        }
        Ok(Self { ts, h, norm })
    }

    pub fn fit(ps: &PseudoSample) -> Result<Self> {
        let ts = crate::transforms::transform(ps);
        let h = normal_reference_h(&ts)?;
        Self::new(ts, h)
    }

    /// Integral of the unnormalized amended surface.
    pub fn normalizing_constant(&self) -> f64 {
        self.norm
    }
}

impl CopulaDensityEstimator for AmendedEstimator {
    fn density(&self, u: f64, v: f64) -> Result<f64> {
        Ok(amended_estimate(&self.ts, &self.h, u, v)? / self.norm)
    }

    fn describe(&self) -> serde_json::Value {
        json!({ "bandwidth": self.h, "normalizing_constant": self.norm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::CopulaModel;
    use crate::transforms::transform;

    fn ts_from(points: &[(f64, f64)]) -> TransformedSample {
        TransformedSample::from_coords(
            points.iter().map(|p| p.0).collect(),
            points.iter().map(|p| p.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn kde_examples() {
        let id = BandwidthMatrix::isotropic(1.0).unwrap();
        let one = ts_from(&[(0.0, 0.0)]);
        assert!((gaussian_kde2(&one, &id, (0.0, 0.0)) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let two = ts_from(&[(-1.0, 0.0), (1.0, 0.0)]);
        let want = (-0.5f64).exp() / (2.0 * PI);
        assert!((gaussian_kde2(&two, &id, (0.0, 0.0)) - want).abs() < 1e-15);
        let h = BandwidthMatrix::new(0.04, 0.09, 0.01).unwrap();
        assert!(gaussian_kde2(&two, &h, (1.0, 12.0 * 0.3 + 0.1)) < 1e-30);
    }

    #[test]
    fn naive_is_kde_over_margins() {
        let ts = transform(&CopulaModel::gaussian(0.3).unwrap().sample(300, 4).unwrap());
        let h = normal_reference_h(&ts).unwrap();
        let (u, v) = (0.2, 0.9);
        let (s, t) = (probit_unchecked(u), probit_unchecked(v));
        let lhs = naive_estimate(&ts, &h, u, v).unwrap() * normal_pdf(s) * normal_pdf(t);
        assert!((lhs - gaussian_kde2(&ts, &h, (s, t))).abs() < 1e-15);
        assert!(naive_estimate(&ts, &h, 0.0, 0.5).is_err());
    }

    #[test]
    fn naive_integrates_to_one() {
        let ps = CopulaModel::frank(4.16).unwrap().sample(500, 8).unwrap();
        let est = NaiveEstimator::fit(&ps).unwrap();
        let g = est.grid(200, GridKind::Midpoint).unwrap();
        let i = g.integral();
        assert!((0.95..=1.005).contains(&i), "{i}");
    }

    #[test]
    fn divisor_examples() {
        let h = BandwidthMatrix::isotropic(0.3).unwrap();
        assert!((amendment_divisor(&h, 0.0, 0.0) - (1.0 - 0.09)).abs() < 1e-15);
        let (s, t) = (probit_unchecked(0.1), probit_unchecked(0.7));
        let want = 1.0 + 0.5 * 0.09 * (s * s + t * t - 2.0);
        assert!((amendment_divisor(&h, s, t) - want).abs() < 1e-15);
        let big = BandwidthMatrix::isotropic(1.5).unwrap();
        assert_eq!(amendment_divisor(&big, 0.0, 0.0), AMENDMENT_FLOOR);
    }

    #[test]
    fn normal_reference_examples() {
        // exact unit covariance with zero mean: (±a, 0), (0, ±a) scaled
        let mut pts = Vec::new();
        for _ in 0..250 {
            pts.extend_from_slice(&[(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]);
        }
        let ts = ts_from(&pts);
        let h = normal_reference_h(&ts).unwrap();
        let var = 1000.0 / 999.0;
        assert!((h.h11() - 0.1 * var).abs() < 1e-12);
        assert!(h.h12().abs() < 1e-15);
        assert!(normal_reference_h(&ts_from(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])).is_err());
    }

    #[test]
    fn amended_renormalizes() {
        let ps = CopulaModel::gaussian(0.59).unwrap().sample(300, 2).unwrap();
        let est = AmendedEstimator::fit(&ps).unwrap();
        let g = est.grid(NORMALIZATION_GRID, GridKind::Midpoint).unwrap();
        assert!((g.integral() - 1.0).abs() < 1e-10);
    }
}
