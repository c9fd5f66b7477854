//! Bandwidth selection: principal axes of the transformed sample, univariate
//! least-squares cross-validation along each axis, and the dimension
//! correction that turns the two univariate choices into a bivariate one.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::BandwidthMatrix;
use crate::error::{domain, Error, Result};
use crate::kde::normal_reference_h;
use crate::loclik::{solve, BandwidthSpec, Degree, KnnBandwidth, LocalStats, KNN_KERNEL_SCALE};
use crate::transforms::TransformedSample;

/// Nodes of the trapezoid rule for `∫ f̃²`; fine enough to resolve the
/// narrowest nearest-neighbour kernels on the candidate grid.
pub const CV_NODES: usize = 1025;

/// Candidate nearest-neighbour fractions `0.05, 0.075, …, 0.95`.
pub fn alpha_grid() -> Vec<f64> {
    (0..=36).map(|i| 0.05 + 0.025 * i as f64).collect()
}

/// Fallback fraction when cross-validation yields nothing usable.
pub const FALLBACK_ALPHA: f64 = 0.3;

/// Share of leave-one-out fits allowed to miss convergence.
const MAX_FAILURE_SHARE: f64 = 0.2;

/// Principal axes of the centred transformed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaDecomposition {
    /// Rows are unit eigenvectors of `ΞᵀΞ`, larger eigenvalue first. The
    /// matrix is chosen symmetric, so it is its own inverse.
    pub w: [[f64; 2]; 2],
    pub center: [f64; 2],
    pub eigenvalues: [f64; 2],
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

/// Principal-component scores `(Q̂ᵢ, R̂ᵢ) = W (ŝᵢ − s̄, t̂ᵢ − t̄)`.
pub fn pca_scores(ts: &TransformedSample) -> Result<PcaDecomposition> {
    let n = ts.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("principal axes need n >= 3, got {n}")));
    }
    let (s, t) = (ts.s(), ts.t());
    let ms = s.iter().sum::<f64>() / n as f64;
    let mt = t.iter().sum::<f64>() / n as f64;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (&x, &y) in s.iter().zip(t) {
        let (x, y) = (x - ms, y - mt);
        a += x * x;
        b += x * y;
        c += y * y;
    }
    let half_tr = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (half_tr + rad, half_tr - rad);
    if !(l2 > 1e-12 * l1) {
        return Err(Error::Degenerate("transformed sample is collinear".into()));
    }
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (cs, sn) = (theta.cos(), theta.sin());
    let w = [[cs, sn], [sn, -cs]];
    let (q, r) = s
        .iter()
        .zip(t)
        .map(|(&x, &y)| {
            let (x, y) = (x - ms, y - mt);
            (w[0][0] * x + w[0][1] * y, w[1][0] * x + w[1][1] * y)
        })
        .unzip();
    Ok(PcaDecomposition { w, center: [ms, mt], eigenvalues: [l1, l2], q, r })
}

/// Smoothing for a univariate fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing1d {
    /// Gaussian kernel with standard deviation `h`.
    Bandwidth(f64),
    /// Bandwidth equal to the distance to the `round(α n)`th neighbour.
    NearestNeighbour(f64),
}

fn knn_count_1d(alpha: f64, n: usize, degree: Degree) -> usize {
    let min = 2 * degree.order() + 1;
    ((alpha * n as f64).round() as usize).clamp(min.min(n), n)
}

/// One univariate local likelihood fit at `x`, optionally leaving out the
/// observation `skip`. Returns `(density, converged)`.
fn fit_1d(
    sample: &[f64],
    skip: Option<usize>,
    degree: Degree,
    smoothing: Smoothing1d,
    x: f64,
) -> Result<(f64, bool)> {
    let n = sample.len() - skip.is_some() as usize;
    let kept = || {
        sample
            .iter()
            .enumerate()
            .filter(move |(i, _)| Some(*i) != skip)
            .map(|(_, &v)| v)
    };
    let h = match smoothing {
        Smoothing1d::Bandwidth(h) => h,
        Smoothing1d::NearestNeighbour(alpha) => {
            let k = knn_count_1d(alpha, n, degree);
            let mut d: Vec<f64> = kept().map(|v| (v - x).abs()).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth / KNN_KERNEL_SCALE
        }
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Degenerate(format!("zero nearest-neighbour distance at {x}")));
    }
    let stats = LocalStats::accumulate(1, degree, n as f64 * h, kept().map(|v| ((v - x) / h, 0.0)));
    if stats.negligible() {
        // every kernel weight underflows, so does the estimate
        return Ok((0.0, true));
    }
    let sol = solve(&stats);
    Ok(((sol.a[0] - stats.shift).exp(), sol.converged))
}

/// Univariate local likelihood density estimate.
pub fn local_density_1d(sample: &[f64], degree: Degree, smoothing: Smoothing1d, x: f64) -> Result<f64> {
    fit_1d(sample, None, degree, smoothing, x).map(|r| r.0)
}

fn check_smoothing(smoothing: Smoothing1d) -> Result<()> {
    match smoothing {
        Smoothing1d::Bandwidth(h) if !(h > 0.0 && h.is_finite()) => {
            Err(domain("h", h, "bandwidth must be positive"))
        }
        Smoothing1d::NearestNeighbour(a) if !(a > 0.0 && a <= 1.0) => {
            Err(domain("alpha", a, "neighbour fraction must lie in (0, 1]"))
        }
        _ => Ok(()),
    }
}

/// Least-squares cross-validation score `∫ f̃² − (2/n) Σᵢ f̃₍₋ᵢ₎(xᵢ)`.
///
/// The integral uses the trapezoid rule on [`CV_NODES`] nodes spanning the
/// data range widened by four standard deviations on each side. Returns
/// [`Error::Degenerate`] when more than a fifth of the leave-one-out fits do
/// not converge.
pub fn cv_criterion_1d(sample: &[f64], degree: Degree, smoothing: Smoothing1d) -> Result<f64> {
    let n = sample.len();
    if n < 10 {
        return Err(Error::InvalidParameter(format!("cross-validation needs n >= 10, got {n}")));
    }
    check_smoothing(smoothing)?;
    let mean = sample.iter().sum::<f64>() / n as f64;
    let sd = (sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * sd;
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * sd;
    let step = (hi - lo) / (CV_NODES - 1) as f64;
    let mut sq = 0.0;
    for i in 0..CV_NODES {
        let (f, _) = fit_1d(sample, None, degree, smoothing, lo + step * i as f64)?;
        let w = if i == 0 || i == CV_NODES - 1 { 0.5 } else { 1.0 };
        sq += w * f * f;
    }
    sq *= step;
    let mut loo = 0.0;
    let mut failures = 0usize;
    for (i, &x) in sample.iter().enumerate() {
        let (f, ok) = fit_1d(sample, Some(i), degree, smoothing, x)?;
        loo += f;
        failures += !ok as usize;
    }
    if failures as f64 > MAX_FAILURE_SHARE * n as f64 {
        return Err(Error::Degenerate(format!(
            "{failures} of {n} leave-one-out fits did not converge"
        )));
    }
    Ok(sq - 2.0 * loo / n as f64)
}

/// Fixed-bandwidth dimension factor: `n^{1/15}` (degree 1), `n^{1/45}` (degree 2).
pub fn k_factor_fixed(n: usize, degree: Degree) -> f64 {
    let e = match degree {
        Degree::Linear => 1.0 / 15.0,
        Degree::Quadratic => 1.0 / 45.0,
    };
    (n as f64).powf(e)
}

/// Nearest-neighbour dimension factor: `n^{−2/15}` (degree 1), `n^{−4/45}` (degree 2).
pub fn k_factor_knn(n: usize, degree: Degree) -> f64 {
    let e = match degree {
        Degree::Linear => -2.0 / 15.0,
        Degree::Quadratic => -4.0 / 45.0,
    };
    (n as f64).powf(e)
}

/// `round(K_n α n)` clamped to `[max(6, 3p), n]`.
pub fn knn_neighbours(n: usize, degree: Degree, alpha: f64) -> usize {
    let raw = (k_factor_knn(n, degree) * alpha * n as f64).round() as usize;
    raw.clamp((3 * degree.order()).max(6).min(n), n)
}

/// Outcome of a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SmoothingSelection {
    Fixed {
        h_q: f64,
        h_r: f64,
        k_factor: f64,
        bandwidth: BandwidthMatrix,
        fallback: bool,
    },
    Knn {
        alpha_q: f64,
        alpha_r: f64,
        kappa: f64,
        k: usize,
        bandwidth: KnnBandwidth,
        fallback: bool,
    },
}

impl SmoothingSelection {
    pub fn bandwidth_spec(&self) -> BandwidthSpec {
        match self {
            SmoothingSelection::Fixed { bandwidth, .. } => BandwidthSpec::Fixed(*bandwidth),
            SmoothingSelection::Knn { bandwidth, .. } => BandwidthSpec::Knn(*bandwidth),
        }
    }

    pub fn is_fallback(&self) -> bool {
        match self {
            SmoothingSelection::Fixed { fallback, .. } | SmoothingSelection::Knn { fallback, .. } => {
                *fallback
            }
        }
    }
}

/// `Wᵀ diag(K h_Q², K h_R²) W`.
pub fn assemble_fixed(w: [[f64; 2]; 2], h_q: f64, h_r: f64, k_factor: f64) -> Result<BandwidthMatrix> {
    BandwidthMatrix::from_rotated(w, [k_factor * h_q * h_q, k_factor * h_r * h_r])
}

fn golden_section_log_h(sample: &[f64], degree: Degree, sd: f64) -> Option<f64> {
    let score = |lh: f64| {
        cv_criterion_1d(sample, degree, Smoothing1d::Bandwidth(lh.exp())).unwrap_or(f64::INFINITY)
    };
    let (lo, hi) = ((0.05 * sd).ln(), (3.0 * sd).ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (score(x1), score(x2));
    while b - a > 1e-3 {
        // ties move toward the larger bandwidth
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = score(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = score(x2);
        }
    }
    let (x, f) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    let interior = x - lo > 2e-3 && hi - x > 2e-3;
    (f.is_finite() && interior).then_some(x.exp())
}

fn sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Cross-validated fixed bandwidth matrix.
pub fn select_fixed(ts: &TransformedSample, degree: Degree) -> Result<SmoothingSelection> {
    let pca = pca_scores(ts)?;
    let n = ts.len();
    let k_factor = k_factor_fixed(n, degree);
    let (hq, hr) = rayon::join(
        || golden_section_log_h(&pca.q, degree, sd(&pca.q)),
        || golden_section_log_h(&pca.r, degree, sd(&pca.r)),
    );
    match (hq, hr) {
        (Some(h_q), Some(h_r)) => Ok(SmoothingSelection::Fixed {
            h_q,
            h_r,
            k_factor,
            bandwidth: assemble_fixed(pca.w, h_q, h_r, k_factor)?,
            fallback: false,
        }),
        _ => {
            warn!("no interior cross-validation minimum; using the Normal Reference bandwidth");
            let bandwidth = normal_reference_h(ts)?;
            Ok(SmoothingSelection::Fixed {
                h_q: f64::NAN,
                h_r: f64::NAN,
                k_factor,
                bandwidth,
                fallback: true,
            })
        }
    }
}

/// Minimizer over [`alpha_grid`], ties going to the larger fraction.
fn best_alpha(sample: &[f64], degree: Degree) -> Option<f64> {
    let scores: Vec<(f64, f64)> = alpha_grid()
        .into_par_iter()
        .map(|a| {
            let s = cv_criterion_1d(sample, degree, Smoothing1d::NearestNeighbour(a));
            (a, s.unwrap_or(f64::INFINITY))
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for (a, s) in scores {
        if s.is_finite() && best.is_none_or(|(_, bs)| s <= bs) {
            best = Some((a, s));
        }
    }
    best.map(|b| b.0)
}

/// Cross-validated nearest-neighbour bandwidth.
pub fn select_knn(ts: &TransformedSample, degree: Degree) -> Result<SmoothingSelection> {
    let pca = pca_scores(ts)?;
    let (aq, ar) = rayon::join(|| best_alpha(&pca.q, degree), || best_alpha(&pca.r, degree));
    let fallback = aq.is_none() || ar.is_none();
    if fallback {
        warn!("cross-validation failed for every candidate; using alpha = {FALLBACK_ALPHA}");
    }
    let alpha_q = aq.unwrap_or(FALLBACK_ALPHA);
    let alpha_r = ar.unwrap_or(FALLBACK_ALPHA);
    let kappa = alpha_q / alpha_r;
    let k = knn_neighbours(ts.len(), degree, alpha_q);
    let nf = ts.len() as f64;
    let scales = pca.eigenvalues.map(|l| (l / nf).sqrt());
    let bandwidth = KnnBandwidth::new(k, kappa, pca.w, pca.center)?.with_scales(scales)?;
    Ok(SmoothingSelection::Knn { alpha_q, alpha_r, kappa, k, bandwidth, fallback })
}
