//! Probit-transformation kernel estimators of bivariate copula densities.
//!
//! Pseudo-observations are mapped to ℝ² with the normal quantile, a density
//! is estimated there (kernel or local log-polynomial likelihood) and the
//! result is carried back to the unit square. Reference estimators, copula
//! families for simulation and a Monte Carlo harness are included.

// Published rational-approximation coefficients are kept digit for digit;
// `!(x > 0.0)` is the NaN-rejecting form.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bandwidth;
pub mod competitors;
pub mod copula;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod harness;
pub mod kde;
pub mod loclik;
pub mod normal;
pub mod select;
pub mod transforms;

pub use bandwidth::BandwidthMatrix;
pub use competitors::{BernsteinEstimator, BetaEstimator, MirrorEstimator};
pub use copula::{CopulaModel, Family};
pub use error::{Error, Result};
pub use estimator::{CopulaDensityEstimator, EstimatorSpec, Smoothing};
pub use grid::{ise_grid, DensityGrid, GridKind};
pub use harness::{BenchmarkConfig, BenchmarkReport};
pub use kde::{AmendedEstimator, NaiveEstimator};
pub use loclik::{BandwidthSpec, Degree, ImprovedEstimator, KnnBandwidth, LocalFit};
pub use select::{PcaDecomposition, SmoothingSelection};
pub use transforms::{PseudoSample, RawSample, TransformedSample};
