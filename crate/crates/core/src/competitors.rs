//! Reference estimators working directly on the unit square: mirror
//! reflection, Beta kernels and Bernstein polynomials.

use serde_json::json;
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::bandwidth::{BandwidthMatrix, Whitener};
use crate::error::{domain, Error, Result};
use crate::estimator::CopulaDensityEstimator;
use crate::kde::{kernel_sum, normal_reference_points};
use crate::transforms::PseudoSample;

/// Gaussian KDE on the sample reflected across every edge and corner of
/// the unit square, counted against the original sample size.
#[derive(Debug, Clone)]
pub struct MirrorEstimator {
    xs: Vec<f64>,
    ys: Vec<f64>,
    n: usize,
    h: BandwidthMatrix,
}

/// Reflections `{u, −u, 2 − u} × {v, −v, 2 − v}`.
pub fn mirror_augment(ps: &PseudoSample) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(9 * ps.len());
    let mut ys = Vec::with_capacity(9 * ps.len());
    for (u, v) in ps.pairs() {
        for a in [u, -u, 2.0 - u] {
            for b in [v, -v, 2.0 - v] {
                xs.push(a);
                ys.push(b);
            }
        }
    }
    (xs, ys)
}

impl MirrorEstimator {
    /// Normal Reference matrix of the augmented points times `(1/9)^{2/3}`.
    pub fn fit(ps: &PseudoSample) -> Result<Self> {
        if ps.len() < 3 {
            return Err(Error::Degenerate(format!("mirror estimator needs n >= 3, got {}", ps.len())));
        }
        let (xs, ys) = mirror_augment(ps);
        let h = normal_reference_points(&xs, &ys)?.scaled((1.0f64 / 9.0).powf(2.0 / 3.0))?;
        Ok(Self { xs, ys, n: ps.len(), h })
    }

    pub fn with_bandwidth(ps: &PseudoSample, h: BandwidthMatrix) -> Self {
        let (xs, ys) = mirror_augment(ps);
        Self { xs, ys, n: ps.len(), h }
    }

    pub fn bandwidth(&self) -> &BandwidthMatrix {
        &self.h
    }

    pub fn augmented_len(&self) -> usize {
        self.xs.len()
    }
}

impl CopulaDensityEstimator for MirrorEstimator {
    fn density(&self, u: f64, v: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(domain("(u, v)", if (0.0..=1.0).contains(&u) { v } else { u }, "must lie in [0,1]²"));
        }
        let w = Whitener::new(&self.h);
        let sum = kernel_sum(&self.xs, &self.ys, &w, (u, v));
        Ok(sum / (2.0 * std::f64::consts::PI * w.det() * self.n as f64))
    }

    fn describe(&self) -> serde_json::Value {
        json!({ "bandwidth": self.h })
    }
}

/// Boundary shape `ρ_h(x) = 2h² + 2.5 − √(4h⁴ + 6h² + 2.25 − x² − x/h)`.
fn boundary_shape(x: f64, h: f64) -> f64 {
    2.0 * h * h + 2.5 - (4.0 * h.powi(4) + 6.0 * h * h + 2.25 - x * x - x / h).sqrt()
}

/// Shape parameters of the boundary-modified Beta kernel at `x`:
/// `x/h, (1−x)/h` inside, with `ρ_h` replacing a shape within `2h` of its
/// edge.
pub fn beta_shapes(x: f64, h: f64) -> (f64, f64) {
    let a = if x < 2.0 * h { boundary_shape(x, h) } else { x / h };
    let b = if 1.0 - x < 2.0 * h { boundary_shape(1.0 - x, h) } else { (1.0 - x) / h };
    (a, b)
}

/// Product Beta-kernel estimator.
#[derive(Debug, Clone)]
pub struct BetaEstimator {
    h: f64,
    ln_u: Vec<(f64, f64)>,
    ln_v: Vec<(f64, f64)>,
}

impl BetaEstimator {
    pub fn new(ps: &PseudoSample, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(domain("h", h, "Beta kernel bandwidth must be positive"));
        }
        let logs = |x: &[f64]| x.iter().map(|&a| (a.ln(), (-a).ln_1p())).collect();
        Ok(Self { h, ln_u: logs(ps.u()), ln_v: logs(ps.v()) })
    }

    fn log_kernels(&self, x: f64, logs: &[(f64, f64)]) -> Vec<f64> {
        let (a, b) = beta_shapes(x, self.h);
        let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
        logs.iter().map(|&(l, l1)| (a - 1.0) * l + (b - 1.0) * l1 - ln_beta).collect()
    }
}

/// Beta-kernel estimate at `(u, v)` with smoothing `h`.
pub fn beta_estimate(ps: &PseudoSample, h: f64, u: f64, v: f64) -> Result<f64> {
    BetaEstimator::new(ps, h)?.density(u, v)
}

impl CopulaDensityEstimator for BetaEstimator {
    fn density(&self, u: f64, v: f64) -> Result<f64> {
        crate::kde::check_open_unit(u, v)?;
        let ku = self.log_kernels(u, &self.ln_u);
        let kv = self.log_kernels(v, &self.ln_v);
        let s: f64 = ku.iter().zip(&kv).map(|(a, b)| (a + b).exp()).sum();
        Ok(s / ku.len() as f64)
    }

    fn describe(&self) -> serde_json::Value {
        json!({ "h": self.h })
    }
}

/// Bernstein polynomial smoothing of box masses on a `k × k` partition.
#[derive(Debug, Clone)]
pub struct BernsteinEstimator {
    k: usize,
    /// Row-major `k × k` masses, `u` outer.
    masses: Vec<f64>,
}

impl BernsteinEstimator {
    /// Box masses of the empirical copula of `ps`.
    pub fn new(ps: &PseudoSample, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(domain("k", 0.0, "Bernstein order must be at least 1"));
        }
        let mut masses = vec![0.0; k * k];
        let w = 1.0 / ps.len() as f64;
        // box i covers (i/k, (i+1)/k]
        let cell = |x: f64| ((x * k as f64).ceil() as usize).clamp(1, k) - 1;
        for (u, v) in ps.pairs() {
            masses[cell(u) * k + cell(v)] += w;
        }
        Ok(Self { k, masses })
    }

    /// Box masses of an arbitrary copula distribution function.
    pub fn from_cdf(k: usize, cdf: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if k == 0 {
            return Err(domain("k", 0.0, "Bernstein order must be at least 1"));
        }
        let g = |i: usize| i as f64 / k as f64;
        let mut masses = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                masses.push(cdf(g(i + 1), g(j + 1)) - cdf(g(i), g(j + 1)) - cdf(g(i + 1), g(j)) + cdf(g(i), g(j)));
            }
        }
        Ok(Self { k, masses })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// `B_{i,m}(x)` for `i = 0..=m`.
pub fn bernstein_basis(m: usize, x: f64) -> Vec<f64> {
    let (lx, l1x) = (x.ln(), (-x).ln_1p());
    (0..=m)
        .map(|i| {
            let a = if i == 0 { 0.0 } else { i as f64 * lx };
            let b = if i == m { 0.0 } else { (m - i) as f64 * l1x };
            (ln_binomial(m as u64, i as u64) + a + b).exp()
        })
        .collect()
}

/// Bernstein estimate `k² Σᵢⱼ Δᵢⱼ B_{i,k−1}(u) B_{j,k−1}(v)`.
pub fn bernstein_estimate(ps: &PseudoSample, k: usize, u: f64, v: f64) -> Result<f64> {
    BernsteinEstimator::new(ps, k)?.density(u, v)
}

impl CopulaDensityEstimator for BernsteinEstimator {
    fn density(&self, u: f64, v: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(domain("(u, v)", if (0.0..=1.0).contains(&u) { v } else { u }, "must lie in [0,1]²"));
        }
        let k = self.k;
        let bu = bernstein_basis(k - 1, u);
        let bv = bernstein_basis(k - 1, v);
        let mut total = 0.0;
        for (i, &wu) in bu.iter().enumerate() {
            let row = &self.masses[i * k..(i + 1) * k];
            total += wu * row.iter().zip(&bv).map(|(m, w)| m * w).sum::<f64>();
        }
        Ok((k * k) as f64 * total)
    }

    fn describe(&self) -> serde_json::Value {
        json!({ "k": self.k })
    }
}
