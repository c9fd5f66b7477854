//! Parametric copula families used as simulation truth: analytic densities,
//! exact samplers and Kendall's τ parameterization.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::normal::{
    normal_cdf, probit_unchecked, student_t_cdf, student_t_ln_pdf, student_t_quantile,
};
use crate::transforms::PseudoSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Independence,
    Gaussian,
    StudentT,
    Frank,
    Gumbel,
    Clayton,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Gaussian => "gaussian",
            Family::StudentT => "t",
            Family::Frank => "frank",
            Family::Gumbel => "gumbel",
            Family::Clayton => "clayton",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "independence" | "indep" | "product" => Family::Independence,
            "gaussian" | "normal" | "gauss" => Family::Gaussian,
            "t" | "student" | "studentt" | "student-t" => Family::StudentT,
            "frank" => Family::Frank,
            "gumbel" => Family::Gumbel,
            "clayton" => Family::Clayton,
            other => return Err(Error::Parse(format!("unknown copula family '{other}'"))),
        })
    }
}

/// A bivariate copula with validated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CopulaModel {
    Independence,
    Gaussian { rho: f64 },
    StudentT { rho: f64, nu: f64 },
    Frank { theta: f64 },
    Gumbel { theta: f64 },
    Clayton { theta: f64 },
}

impl CopulaModel {
    pub fn gaussian(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(CopulaModel::Gaussian { rho })
    }

    pub fn student_t(rho: f64, nu: f64) -> Result<Self> {
        check_rho(rho)?;
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(domain("nu", nu, "degrees of freedom must be positive"));
        }
        Ok(CopulaModel::StudentT { rho, nu })
    }

    pub fn frank(theta: f64) -> Result<Self> {
        if theta == 0.0 || !theta.is_finite() {
            return Err(domain("theta", theta, "Frank parameter must be finite and non-zero"));
        }
        Ok(CopulaModel::Frank { theta })
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        if !(theta >= 1.0 && theta.is_finite()) {
            return Err(domain("theta", theta, "Gumbel parameter must be >= 1"));
        }
        Ok(CopulaModel::Gumbel { theta })
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(domain("theta", theta, "Clayton parameter must be > 0"));
        }
        Ok(CopulaModel::Clayton { theta })
    }

    /// Re-checks the invariants, for models built with struct literals.
    pub fn validate(&self) -> Result<()> {
        match *self {
            CopulaModel::Independence => Ok(()),
            CopulaModel::Gaussian { rho } => Self::gaussian(rho).map(|_| ()),
            CopulaModel::StudentT { rho, nu } => Self::student_t(rho, nu).map(|_| ()),
            CopulaModel::Frank { theta } => Self::frank(theta).map(|_| ()),
            CopulaModel::Gumbel { theta } => Self::gumbel(theta).map(|_| ()),
            CopulaModel::Clayton { theta } => Self::clayton(theta).map(|_| ()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            CopulaModel::Independence => Family::Independence,
            CopulaModel::Gaussian { .. } => Family::Gaussian,
            CopulaModel::StudentT { .. } => Family::StudentT,
            CopulaModel::Frank { .. } => Family::Frank,
            CopulaModel::Gumbel { .. } => Family::Gumbel,
            CopulaModel::Clayton { .. } => Family::Clayton,
        }
    }

    /// Builds the family member with the given Kendall's τ. Student-t needs
    /// its degrees of freedom and is built with [`CopulaModel::student_t`].
    pub fn from_tau(family: Family, tau: f64) -> Result<Self> {
        let p = tau_to_param(family, tau)?;
        match family {
            Family::Independence => Ok(CopulaModel::Independence),
            Family::Gaussian => Self::gaussian(p),
            Family::StudentT => Err(Error::InvalidParameter(
                "Student-t needs degrees of freedom; use CopulaModel::student_t".into(),
            )),
            Family::Frank => Self::frank(p),
            Family::Gumbel => Self::gumbel(p),
            Family::Clayton => Self::clayton(p),
        }
    }

    /// Population Kendall's τ.
    pub fn kendall_tau(&self) -> f64 {
        match *self {
            CopulaModel::Independence => 0.0,
            CopulaModel::Gaussian { rho } | CopulaModel::StudentT { rho, .. } => {
                2.0 / PI * rho.asin()
            }
            CopulaModel::Frank { theta } => frank_tau(theta),
            CopulaModel::Gumbel { theta } => 1.0 - 1.0 / theta,
            CopulaModel::Clayton { theta } => theta / (theta + 2.0),
        }
    }

    /// Copula density c(u, v) on the open unit square.
    pub fn density(&self, u: f64, v: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(domain("u", u, "copula density requires 0 < u < 1"));
        }
        if !(v > 0.0 && v < 1.0) {
            return Err(domain("v", v, "copula density requires 0 < v < 1"));
        }
        Ok(self.ln_density_unchecked(u, v).exp())
    }

    pub(crate) fn ln_density_unchecked(&self, u: f64, v: f64) -> f64 {
        match *self {
            CopulaModel::Independence => 0.0,
            CopulaModel::Gaussian { rho } => {
                let (x, y) = (probit_unchecked(u), probit_unchecked(v));
                let r2 = 1.0 - rho * rho;
                -0.5 * r2.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)
            }
            CopulaModel::StudentT { rho, nu } => {
                // quantiles only fail outside (0,1), excluded by the caller
                let x = student_t_quantile(u, nu).unwrap_or(f64::NAN);
                let y = student_t_quantile(v, nu).unwrap_or(f64::NAN);
                let r2 = 1.0 - rho * rho;
                let q = (x * x - 2.0 * rho * x * y + y * y) / (nu * r2);
                let ln_joint = ln_gamma(0.5 * (nu + 2.0))
                    - ln_gamma(0.5 * nu)
                    - (nu * PI).ln()
                    - 0.5 * r2.ln()
                    - 0.5 * (nu + 2.0) * q.ln_1p();
                ln_joint - student_t_ln_pdf(x, nu) - student_t_ln_pdf(y, nu)
            }
            CopulaModel::Frank { theta } => {
                let g = -(-theta).exp_m1(); // 1 - e^{-θ}
                let gu = -(-theta * u).exp_m1();
                let gv = -(-theta * v).exp_m1();
                let denom = g - gu * gv;
                (theta * g).ln() - theta * (u + v) - 2.0 * denom.abs().ln()
            }
            CopulaModel::Gumbel { theta } => {
                let x = -u.ln();
                let y = -v.ln();
                let s = (theta * x.ln()).exp() + (theta * y.ln()).exp();
                let a = s.powf(1.0 / theta);
                -a + x + y + (theta - 1.0) * (x.ln() + y.ln()) + (1.0 / theta - 2.0) * s.ln()
                    + (a + theta - 1.0).ln()
            }
            CopulaModel::Clayton { theta } => {
                let (lu, lv) = (u.ln(), v.ln());
                let base = (-theta * lu).exp() + (-theta * lv).exp() - 1.0;
                (1.0 + theta).ln() - (theta + 1.0) * (lu + lv) - (2.0 + 1.0 / theta) * base.ln()
            }
        }
    }

    /// Draws `n` i.i.d. pairs from the copula, deterministically in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<PseudoSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<PseudoSample> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be at least 1".into()));
        }
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let (a, b) = self.draw(rng)?;
            u.push(clamp_open(a));
            v.push(clamp_open(b));
        }
        PseudoSample::from_uniforms(u, v)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64)> {
        Ok(match *self {
            CopulaModel::Independence => (open01(rng), open01(rng)),
            CopulaModel::Gaussian { rho } => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let y = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
                (normal_cdf(z1), normal_cdf(y))
            }
            CopulaModel::StudentT { rho, nu } => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let chi = ChiSquared::new(nu)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?
                    .sample(rng);
                let scale = (chi / nu).sqrt().recip();
                let x = z1 * scale;
                let y = (rho * z1 + (1.0 - rho * rho).sqrt() * z2) * scale;
                (student_t_cdf(x, nu), student_t_cdf(y, nu))
            }
            CopulaModel::Clayton { theta } => {
                // Gamma(1/θ) frailty, generator (1+t)^{-1/θ}
                let frailty: f64 = Gamma::new(1.0 / theta, 1.0)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?
                    .sample(rng);
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                let f = |e: f64| (-(e / frailty).ln_1p() / theta).exp();
                (f(e1), f(e2))
            }
            CopulaModel::Gumbel { theta } => {
                if theta == 1.0 {
                    return Ok((open01(rng), open01(rng)));
                }
                // positive α-stable frailty with Laplace transform exp(-t^α)
                let alpha = 1.0 / theta;
                let s = positive_stable(alpha, rng);
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                let f = |e: f64| (-(e / s).powf(alpha)).exp();
                (f(e1), f(e2))
            }
            CopulaModel::Frank { theta } => {
                let u = open01(rng);
                let p = open01(rng);
                // invert the conditional distribution C(v | u) = p
                let a = (-theta * u).exp();
                let g = (-theta).exp_m1();
                let b = p * g / (p + a * (1.0 - p));
                let v = -b.ln_1p() / theta;
                (u, v)
            }
        })
    }
}

impl fmt::Display for CopulaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CopulaModel::Independence => write!(f, "independence"),
            CopulaModel::Gaussian { rho } => write!(f, "gaussian:rho={rho}"),
            CopulaModel::StudentT { rho, nu } => write!(f, "t:rho={rho},nu={nu}"),
            CopulaModel::Frank { theta } => write!(f, "frank:theta={theta}"),
            CopulaModel::Gumbel { theta } => write!(f, "gumbel:theta={theta}"),
            CopulaModel::Clayton { theta } => write!(f, "clayton:theta={theta}"),
        }
    }
}

/// Parses `family[:key=value,...]`, e.g. `gaussian:rho=0.59`,
/// `t:rho=0.31,nu=4` or `clayton:tau=0.4`.
impl FromStr for CopulaModel {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let (name, params) = spec.split_once(':').unwrap_or((spec, ""));
        let family: Family = name.parse()?;
        let mut rho = None;
        let mut theta = None;
        let mut nu = None;
        let mut tau = None;
        for kv in params.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got '{kv}'")))?;
            let val: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("'{v}' is not a number")))?;
            match k.trim() {
                "rho" => rho = Some(val),
                "theta" => theta = Some(val),
                "nu" | "df" => nu = Some(val),
                "tau" => tau = Some(val),
                other => return Err(Error::Parse(format!("unknown copula parameter '{other}'"))),
            }
        }
        let missing = |p: &str| Error::Parse(format!("{} copula needs '{p}'", family.name()));
        let param = |direct: Option<f64>, name: &str| -> Result<f64> {
            match (direct, tau) {
                (Some(x), _) => Ok(x),
                (None, Some(t)) => tau_to_param(family, t),
                _ => Err(missing(name)),
            }
        };
        match family {
            Family::Independence => Ok(CopulaModel::Independence),
            Family::Gaussian => Self::gaussian(param(rho, "rho")?),
            Family::StudentT => {
                Self::student_t(param(rho, "rho")?, nu.ok_or_else(|| missing("nu"))?)
            }
            Family::Frank => Self::frank(param(theta, "theta")?),
            Family::Gumbel => Self::gumbel(param(theta, "theta")?),
            Family::Clayton => Self::clayton(param(theta, "theta")?),
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(domain("rho", rho, "correlation must lie in (-1, 1)"));
    }
    Ok(())
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            return x;
        }
    }
}

fn clamp_open(x: f64) -> f64 {
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Kanter's representation of a positive stable variable with
/// E[exp(-tS)] = exp(-t^α), 0 < α < 1.
fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let angle = PI * open01(rng);
    let w: f64 = Exp1.sample(rng);
    let a = ((alpha * angle).sin().powf(alpha) * ((1.0 - alpha) * angle).sin().powf(1.0 - alpha)
        / angle.sin())
    .powf(1.0 / (1.0 - alpha));
    (a / w).powf((1.0 - alpha) / alpha)
}

/// ∫₀^x t/(eᵗ−1) dt by composite Simpson; the integrand is smooth.
fn debye_integral(x: f64) -> f64 {
    let panels = 4000;
    let h = x / panels as f64;
    let f = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    let mut acc = f(0.0) + f(x);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

/// Kendall's τ of the Frank copula, 1 − 4/θ·(1 − D₁(θ)).
pub fn frank_tau(theta: f64) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    if theta < 0.0 {
        return -frank_tau(-theta);
    }
    let d1 = debye_integral(theta) / theta;
    1.0 - 4.0 / theta * (1.0 - d1)
}

/// Copula parameter matching Kendall's τ.
///
/// Gaussian and Student-t return ρ = sin(πτ/2), Gumbel θ = 1/(1−τ), Clayton
/// θ = 2τ/(1−τ); Frank inverts the Debye relation by bisection on
/// θ ∈ [1e-6, 100].
pub fn tau_to_param(family: Family, tau: f64) -> Result<f64> {
    if !(tau > -1.0 && tau < 1.0) {
        return Err(domain("tau", tau, "Kendall's tau must lie in (-1, 1)"));
    }
    match family {
        Family::Independence => {
            if tau != 0.0 {
                return Err(domain("tau", tau, "independence copula has tau = 0"));
            }
            Ok(0.0)
        }
        Family::Gaussian | Family::StudentT => Ok((PI * tau / 2.0).sin()),
        Family::Gumbel => {
            if tau < 0.0 {
                return Err(domain("tau", tau, "Gumbel copula needs tau >= 0"));
            }
            Ok(1.0 / (1.0 - tau))
        }
        Family::Clayton => {
            if tau <= 0.0 {
                return Err(domain("tau", tau, "Clayton copula needs tau > 0"));
            }
            Ok(2.0 * tau / (1.0 - tau))
        }
        Family::Frank => {
            if tau == 0.0 {
                return Err(domain("tau", tau, "Frank copula needs tau != 0"));
            }
            let target = tau.abs();
            let (mut lo, mut hi) = (1e-6_f64, 100.0_f64);
            if frank_tau(hi) < target {
                return Err(domain("tau", tau, "beyond the Frank search bracket theta <= 100"));
            }
            if frank_tau(lo) > target {
                return Err(domain("tau", tau, "below the Frank search bracket theta >= 1e-6"));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if frank_tau(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-13 {
                    break;
                }
            }
            Ok(0.5 * (lo + hi) * tau.signum())
        }
    }
}

/// Sample Kendall's τ (tau-a), O(n²).
pub fn sample_kendall_tau(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = (u[i] - u[j]) * (v[i] - v[j]);
            s += (a > 0.0) as i64 - (a < 0.0) as i64;
        }
    }
    2.0 * s as f64 / (n as f64 * (n as f64 - 1.0))
}
