//! A common interface over every fitted copula density estimator, and the
//! string specifications used to request them.

use std::fmt;
use std::str::FromStr;

use serde_json::json;

use crate::competitors::{BernsteinEstimator, BetaEstimator, MirrorEstimator};
use crate::copula::CopulaModel;
use crate::error::{Error, Result};
use crate::grid::{DensityGrid, GridKind};
use crate::kde::{AmendedEstimator, NaiveEstimator};
use crate::loclik::{Degree, ImprovedEstimator};
use crate::transforms::PseudoSample;

/// A fitted copula density estimate.
pub trait CopulaDensityEstimator: Send + Sync {
    /// Estimated density at `(u, v)`.
    fn density(&self, u: f64, v: f64) -> Result<f64>;

    fn grid(&self, n: usize, kind: GridKind) -> Result<DensityGrid> {
        DensityGrid::tabulate(n, kind, |u, v| self.density(u, v))
    }

    /// Tuning parameters in effect, for run manifests.
    fn describe(&self) -> serde_json::Value {
        json!({})
    }
}

/// The true copula density, used as a zero-error reference estimator.
impl CopulaDensityEstimator for CopulaModel {
    fn density(&self, u: f64, v: f64) -> Result<f64> {
        CopulaModel::density(self, u, v)
    }

    fn describe(&self) -> serde_json::Value {
        json!({ "model": self.to_string() })
    }
}

/// Bandwidth family for the local likelihood estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Cross-validated fixed matrix.
    Fixed,
    /// Cross-validated nearest-neighbour bandwidth.
    Knn,
    /// `h² I` with the given `h`.
    Isotropic(f64),
}

/// Which estimator to fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    Naive,
    Amended,
    LocalLikelihood { degree: Degree, smoothing: Smoothing },
    Mirror,
    Beta { h: f64 },
    Bernstein { k: usize },
    /// The generating copula; only meaningful for simulated data.
    True,
}

impl EstimatorSpec {
    /// Fits to pseudo-observations; local likelihood fits come back
    /// renormalized. `truth` is required by [`EstimatorSpec::True`].
    pub fn fit(
        &self,
        ps: &PseudoSample,
        truth: Option<&CopulaModel>,
    ) -> Result<Box<dyn CopulaDensityEstimator>> {
        Ok(match *self {
            EstimatorSpec::Naive => Box::new(NaiveEstimator::fit(ps)?),
            EstimatorSpec::Amended => Box::new(AmendedEstimator::fit(ps)?),
            EstimatorSpec::LocalLikelihood { degree, smoothing } => {
                Box::new(ImprovedEstimator::fit(ps, degree, smoothing)?.renormalize()?)
            }
            EstimatorSpec::Mirror => Box::new(MirrorEstimator::fit(ps)?),
            EstimatorSpec::Beta { h } => Box::new(BetaEstimator::new(ps, h)?),
            EstimatorSpec::Bernstein { k } => Box::new(BernsteinEstimator::new(ps, k)?),
            EstimatorSpec::True => Box::new(*truth.ok_or_else(|| {
                Error::InvalidParameter("the 'true' estimator needs a known copula".into())
            })?),
        })
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EstimatorSpec::Naive => write!(f, "naive"),
            EstimatorSpec::Amended => write!(f, "amended"),
            EstimatorSpec::LocalLikelihood { degree, smoothing } => {
                let p = degree.order();
                match smoothing {
                    Smoothing::Fixed => write!(f, "loclik{p}:fixed"),
                    Smoothing::Knn => write!(f, "loclik{p}:knn"),
                    Smoothing::Isotropic(h) => write!(f, "loclik{p}:h={h}"),
                }
            }
            EstimatorSpec::Mirror => write!(f, "mirror"),
            EstimatorSpec::Beta { h } => write!(f, "beta:h={h}"),
            EstimatorSpec::Bernstein { k } => write!(f, "bernstein:k={k}"),
            EstimatorSpec::True => write!(f, "true"),
        }
    }
}

/// Accepted forms: `naive`, `amended`, `loclik1:knn`, `loclik2:fixed`,
/// `loclik1:h=0.3`, `mirror`, `beta:h=0.05`, `bernstein:k=15`, `true`.
impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b.trim())));
        let bad = || Error::Parse(format!("unrecognized estimator '{s}'"));
        let keyed = |key: &str| -> Result<f64> {
            let (k, v) = arg.and_then(|a| a.split_once('=')).ok_or_else(bad)?;
            if k.trim() != key {
                return Err(bad());
            }
            v.trim().parse().map_err(|_| Error::Parse(format!("'{v}' is not a number")))
        };
        let bare = |spec: EstimatorSpec| if arg.is_none() { Ok(spec) } else { Err(bad()) };
        match name.to_ascii_lowercase().as_str() {
            "naive" => bare(EstimatorSpec::Naive),
            "amended" => bare(EstimatorSpec::Amended),
            "mirror" => bare(EstimatorSpec::Mirror),
            "true" => bare(EstimatorSpec::True),
            "beta" => Ok(EstimatorSpec::Beta { h: keyed("h")? }),
            "bernstein" => {
                let k = keyed("k")?;
                if !(k >= 1.0 && k.fract() == 0.0) {
                    return Err(Error::Parse(format!("Bernstein k must be a positive integer, got {k}")));
                }
                Ok(EstimatorSpec::Bernstein { k: k as usize })
            }
            "loclik1" | "loclik2" => {
                let degree = if name.ends_with('1') { Degree::Linear } else { Degree::Quadratic };
                let smoothing = match arg {
                    Some("knn") | None => Smoothing::Knn,
                    Some("fixed") => Smoothing::Fixed,
                    Some(_) => Smoothing::Isotropic(keyed("h")?),
                };
                Ok(EstimatorSpec::LocalLikelihood { degree, smoothing })
            }
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in [
            "naive",
            "amended",
            "loclik1:knn",
            "loclik2:knn",
            "loclik1:fixed",
            "loclik2:h=0.3",
            "mirror",
            "beta:h=0.02",
            "bernstein:k=15",
            "true",
        ] {
            let spec: EstimatorSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!("loclik2".parse::<EstimatorSpec>().unwrap().to_string(), "loclik2:knn");
        for bad in ["beta", "bernstein:k=1.5", "mirror:x", "loclik3:knn", "beta:k=2", "kde"] {
            assert!(bad.parse::<EstimatorSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn true_needs_model() {
        let ps = PseudoSample::from_uniforms(vec![0.2, 0.5, 0.8], vec![0.3, 0.6, 0.9]).unwrap();
        assert!(EstimatorSpec::True.fit(&ps, None).is_err());
        let m = CopulaModel::Independence;
        let est = EstimatorSpec::True.fit(&ps, Some(&m)).unwrap();
        assert_eq!(est.density(0.3, 0.4).unwrap(), 1.0);
    }
}
