//! Monte Carlo comparison of estimators by integrated squared error, and
//! fitting of user data sets.
//!
//! # Configuration file
//!
//! A flat `key = value` text file; `#` starts a comment. Lists are separated
//! by `;` because copula specifications contain commas.
//!
//! | key            | meaning                                   | default |
//! |----------------|-------------------------------------------|---------|
//! | `copulas`      | copula models, e.g. `gaussian:rho=0.59`   | required |
//! | `estimators`   | estimator specs, e.g. `mirror; loclik2:knn` | required |
//! | `n`            | sample size                               | 500     |
//! | `replications` | Monte Carlo replications (alias `M`)      | 100     |
//! | `grid`         | ISE lattice size `N`                      | 64      |
//! | `seed`         | master seed                               | 1       |
//! | `output_dir`   | report directory                          | `$PCOPULA_OUTPUT_DIR` or `.` |

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::CopulaModel;
use crate::error::{Error, Result};
use crate::estimator::EstimatorSpec;
use crate::grid::{ise_grid, DensityGrid, GridKind};
use crate::transforms::{pseudo_observations, rank_uniforms, PseudoSample, RawSample};

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "PCOPULA_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub copulas: Vec<CopulaModel>,
    pub estimators: Vec<EstimatorSpec>,
    pub n: usize,
    pub replications: usize,
    pub grid: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            copulas: Vec::new(),
            estimators: Vec::new(),
            n: 500,
            replications: 100,
            grid: 64,
            seed: 1,
            output_dir: std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from),
        }
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(';').map(str::trim).filter(|s| !s.is_empty())
}

impl BenchmarkConfig {
    /// Parses the key-value format on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::InvalidRow {
                row: i + 1,
                reason: format!("expected key = value, got '{line}'"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::InvalidRow { row: i + 1, reason: e.to_string() })?;
        }
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key, as from the file or a command-line override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| v.parse::<u64>().map_err(|_| Error::Parse(format!("'{v}' is not a non-negative integer")));
        match key {
            "copulas" => self.copulas = split_list(value).map(str::parse).collect::<Result<_>>()?,
            "estimators" => self.estimators = split_list(value).map(str::parse).collect::<Result<_>>()?,
            "n" => self.n = int(value)? as usize,
            "replications" | "M" => self.replications = int(value)? as usize,
            "grid" => self.grid = int(value)? as usize,
            "seed" => self.seed = int(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(Error::Parse(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.grid < 2 {
            return bad("grid size must be at least 2");
        }
        if self.estimators.is_empty() {
            return bad("estimator list is empty");
        }
        if self.copulas.is_empty() {
            return bad("copula list is empty");
        }
        if self.n < 3 {
            return bad("sample size must be at least 3");
        }
        for c in &self.copulas {
            c.validate()?;
        }
        Ok(())
    }
}

/// Summary for one (copula, estimator) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub copula: String,
    pub estimator: String,
    pub n: usize,
    pub replications: usize,
    /// Per-replication ISE; `None` where the estimator failed.
    pub ise: Vec<Option<f64>>,
    pub mise: f64,
    pub stderr: f64,
    pub median_ise: f64,
    /// `mise / mise(mirror)` for the same copula, if mirror was run.
    pub relative_to_mirror: Option<f64>,
    pub failures: usize,
}

impl CellSummary {
    fn from_ise(copula: String, estimator: String, n: usize, ise: Vec<Option<f64>>) -> Self {
        let ok: Vec<f64> = ise.iter().flatten().copied().collect();
        let m = ok.len();
        let mise = if m > 0 { ok.iter().sum::<f64>() / m as f64 } else { f64::NAN };
        let stderr = if m > 1 {
            (ok.iter().map(|x| (x - mise) * (x - mise)).sum::<f64>() / (m - 1) as f64 / m as f64).sqrt()
        } else {
            0.0
        };
        Self {
            copula,
            estimator,
            n,
            replications: ise.len(),
            failures: ise.len() - m,
            median_ise: median(&ok),
            ise,
            mise,
            stderr,
            relative_to_mirror: None,
        }
    }

    pub fn successful(&self) -> impl Iterator<Item = f64> + '_ {
        self.ise.iter().flatten().copied()
    }
}

pub(crate) fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cells: Vec<CellSummary>,
}

impl BenchmarkReport {
    pub fn cell(&self, copula: &str, estimator: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.copula == copula && c.estimator == estimator)
    }

    /// Columns `copula, estimator, n, M, mise, stderr, relative_to_mirror, failures`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["copula", "estimator", "n", "M", "mise", "stderr", "relative_to_mirror", "failures"])?;
        for c in &self.cells {
            w.write_record([
                c.copula.clone(),
                c.estimator.clone(),
                c.n.to_string(),
                c.replications.to_string(),
                c.mise.to_string(),
                c.stderr.to_string(),
                c.relative_to_mirror.map_or_else(String::new, |r| r.to_string()),
                c.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per replication: `copula, estimator, replication, ise`.
    pub fn write_replications_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["copula", "estimator", "replication", "ise"])?;
        for c in &self.cells {
            for (r, ise) in c.ise.iter().enumerate() {
                w.write_record([
                    c.copula.clone(),
                    c.estimator.clone(),
                    r.to_string(),
                    ise.map_or_else(String::new, |x| x.to_string()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Independent generator for replication `rep` of copula `copula`.
pub fn replication_rng(master: u64, copula: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((copula as u64) << 32) | rep as u64);
    rng
}

/// Pseudo-observations of one simulated replication.
pub fn simulate_replication(model: &CopulaModel, n: usize, master: u64, copula: usize, rep: usize) -> Result<PseudoSample> {
    let mut rng = replication_rng(master, copula, rep);
    let draw = model.sample_with(n, &mut rng)?;
    rank_uniforms(draw.u(), draw.v())
}

/// Runs every estimator on every replication of every copula.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for (ci, model) in cfg.copulas.iter().enumerate() {
        let truth = DensityGrid::tabulate(cfg.grid, GridKind::Lattice, |u, v| model.density(u, v))?;
        let per_rep: Vec<Vec<Option<f64>>> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| -> Result<Vec<Option<f64>>> {
                let ps = simulate_replication(model, cfg.n, cfg.seed, ci, r)?;
                Ok(cfg
                    .estimators
                    .iter()
                    .map(|spec| {
                        let out = spec
                            .fit(&ps, Some(model))
                            .and_then(|est| est.grid(cfg.grid, GridKind::Lattice))
                            .and_then(|g| ise_grid(&g, &truth));
                        match out {
                            Ok(x) => Some(x),
                            Err(e) => {
                                log::warn!("{spec} failed on {model} replication {r}: {e}");
                                None
                            }
                        }
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        let first = cells.len();
        for (ei, spec) in cfg.estimators.iter().enumerate() {
            let ise = per_rep.iter().map(|row| row[ei]).collect();
            cells.push(CellSummary::from_ise(model.to_string(), spec.to_string(), cfg.n, ise));
        }
        let mirror = cfg.estimators.iter().position(|e| *e == EstimatorSpec::Mirror).map(|i| cells[first + i].mise);
        if let Some(base) = mirror {
            for cell in &mut cells[first..] {
                cell.relative_to_mirror = Some(if cell.estimator == "mirror" { 1.0 } else { cell.mise / base });
            }
        }
    }
    Ok(BenchmarkReport { cells })
}

/// Writes `report.csv` and `replications.csv` into the configured directory.
pub fn write_report(cfg: &BenchmarkConfig, report: &BenchmarkReport) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("report.csv");
    report.write_csv(std::fs::File::create(&path)?)?;
    report.write_replications_csv(std::fs::File::create(cfg.output_dir.join("replications.csv"))?)?;
    Ok(path)
}

/// Options for [`fit_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub estimator: EstimatorSpec,
    pub grid: usize,
    pub renormalize: bool,
    /// Recorded for reproducibility; fitting itself draws no random numbers.
    pub seed: u64,
}

/// Record of a dataset fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub input: String,
    pub n: usize,
    pub estimator: String,
    pub grid: usize,
    pub renormalized: bool,
    pub seed: u64,
    pub parameters: serde_json::Value,
    pub fit_seconds: f64,
    pub grid_seconds: f64,
}

/// Smallest data set accepted by [`fit_dataset`].
pub const MIN_DATASET_SIZE: usize = 20;

/// Pseudo-observations, bandwidth selection and lattice evaluation for a
/// two-column CSV file.
pub fn fit_dataset(csv_path: impl AsRef<Path>, opts: &FitOptions) -> Result<(DensityGrid, RunManifest)> {
    let path = csv_path.as_ref();
    let raw = RawSample::read_csv_path(path)?;
    fit_sample(&raw, &path.display().to_string(), opts)
}

/// [`fit_dataset`] on data already in memory.
pub fn fit_sample(raw: &RawSample, label: &str, opts: &FitOptions) -> Result<(DensityGrid, RunManifest)> {
    if raw.len() < MIN_DATASET_SIZE {
        return Err(Error::InvalidParameter(format!(
            "data set has {} rows; at least {MIN_DATASET_SIZE} are needed",
            raw.len()
        )));
    }
    if opts.estimator == EstimatorSpec::True {
        return Err(Error::InvalidParameter("the 'true' estimator needs simulated data".into()));
    }
    let ps = pseudo_observations(raw);
    let t0 = Instant::now();
    let est = opts.estimator.fit(&ps, None)?;
    let fit_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let mut grid = est.grid(opts.grid, GridKind::Lattice)?;
    if opts.renormalize {
        grid = grid.renormalize()?;
    }
    let manifest = RunManifest {
        input: label.to_string(),
        n: raw.len(),
        estimator: opts.estimator.to_string(),
        grid: opts.grid,
        renormalized: opts.renormalize,
        seed: opts.seed,
        parameters: est.describe(),
        fit_seconds,
        grid_seconds: t1.elapsed().as_secs_f64(),
    };
    Ok((grid, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_config_and_overrides() {
        let text = "# demo\ncopulas = gaussian:rho=0.59; t:rho=0.31,nu=4\nestimators = mirror; loclik2:knn\nn = 200\nM = 7\nseed = 3 # trailing\n";
        let mut cfg = BenchmarkConfig::parse(text).unwrap();
        assert_eq!(cfg.copulas.len(), 2);
        assert_eq!(cfg.estimators[1].to_string(), "loclik2:knn");
        assert_eq!((cfg.n, cfg.replications, cfg.grid, cfg.seed), (200, 7, 64, 3));
        cfg.set("grid", "16").unwrap();
        assert_eq!(cfg.grid, 16);
        assert!(cfg.set("bogus", "1").is_err());
        let err = BenchmarkConfig::parse("n = 5\nno equals sign\n").unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn validation() {
        let mut cfg = BenchmarkConfig::parse("copulas = independence\nestimators = mirror\n").unwrap();
        assert!(cfg.validate().is_ok());
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn true_density_has_zero_ise() {
        let cfg = BenchmarkConfig::parse("copulas = independence; clayton:theta=1\nestimators = true\nn = 50\nM = 1\n").unwrap();
        let rep = run_benchmark(&cfg).unwrap();
        assert!(rep.cells.iter().all(|c| c.mise == 0.0 && c.failures == 0));
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let m = CopulaModel::Independence;
        let a = simulate_replication(&m, 30, 5, 0, 0).unwrap();
        assert_eq!(a, simulate_replication(&m, 30, 5, 0, 0).unwrap());
        assert_ne!(a, simulate_replication(&m, 30, 5, 0, 1).unwrap());
        assert_ne!(a, simulate_replication(&m, 30, 5, 1, 0).unwrap());
    }

    #[test]
    fn mirror_is_its_own_reference() {
        let cfg = BenchmarkConfig::parse("copulas = frank:theta=4\nestimators = bernstein:k=10; mirror\nn = 100\nM = 3\ngrid = 16\n").unwrap();
        let rep = run_benchmark(&cfg).unwrap();
        let m = rep.cell("frank:theta=4", "mirror").unwrap();
        assert_eq!(m.relative_to_mirror, Some(1.0));
        let b = rep.cell("frank:theta=4", "bernstein:k=10").unwrap();
        assert!((b.relative_to_mirror.unwrap() - b.mise / m.mise).abs() < 1e-15);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("copula,estimator,n,M,mise,stderr,relative_to_mirror,failures\n"));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
