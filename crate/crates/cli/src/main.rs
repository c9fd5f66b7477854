//! `pcopula`: simulate copula samples, fit density estimators, run Monte
//! Carlo benchmarks and compare density grids.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use probit_copula::harness::{fit_dataset, run_benchmark, write_report, FitOptions, OUTPUT_DIR_ENV};
use probit_copula::{ise_grid, BenchmarkConfig, CopulaModel, DensityGrid, EstimatorSpec, GridKind};
use probit_copula::transforms::rank_uniforms;

#[derive(Parser)]
#[command(name = "pcopula", version, about = "Probit-transformation kernel copula density estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample from a parametric copula and write it as `u,v` CSV.
    Simulate(SimulateArgs),
    /// Fit an estimator to a two-column CSV data set; writes a grid CSV and a manifest.
    Fit(FitArgs),
    /// Run a Monte Carlo benchmark and write report CSVs.
    Bench(BenchArgs),
    /// Integrated squared error between two density grids.
    Ise(IseArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Copula, e.g. `gaussian:rho=0.59`, `t:rho=0.3,nu=4`, `clayton:theta=2.5`, `independence`.
    #[arg(long)]
    copula: CopulaModel,
    #[arg(short, long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replace the draws by their rescaled ranks.
    #[arg(long)]
    pseudo: bool,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Two numeric columns, optional header.
    input: PathBuf,
    /// Estimator, e.g. `loclik2:knn`, `loclik1:fixed`, `amended`, `mirror`, `beta:h=0.05`, `bernstein:k=15`.
    #[arg(short, long, default_value = "loclik2:knn")]
    estimator: EstimatorSpec,
    /// Lattice size N (nodes k/(N+1)).
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Rescale the grid to unit mean.
    #[arg(long)]
    renormalize: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = ".")]
    output_dir: PathBuf,
    /// File name prefix inside the output directory.
    #[arg(long, default_value = "fit")]
    prefix: String,
}

#[derive(Args)]
struct BenchArgs {
    /// Key-value configuration file; the flags below override its entries.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// `;`-separated copula list.
    #[arg(long)]
    copulas: Option<String>,
    /// `;`-separated estimator list.
    #[arg(long)]
    estimators: Option<String>,
    #[arg(short, long)]
    n: Option<usize>,
    /// Replications.
    #[arg(short = 'M', long)]
    replications: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct IseArgs {
    /// Estimated grid CSV.
    estimate: PathBuf,
    /// Reference grid CSV.
    #[arg(required_unless_present = "copula", conflicts_with = "copula")]
    truth: Option<PathBuf>,
    /// Tabulate the reference from a copula instead of reading a file.
    #[arg(long)]
    copula: Option<CopulaModel>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Bench(a) => bench(a),
        Command::Ise(a) => ise(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.n == 0 {
        bail!("sample size must be positive");
    }
    let mut sample = a.copula.sample(a.n, a.seed)?;
    if a.pseudo {
        sample = rank_uniforms(sample.u(), sample.v())?;
    }
    match &a.output {
        Some(path) => sample.write_csv(BufWriter::new(create(path)?))?,
        None => sample.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let opts = FitOptions { estimator: a.estimator, grid: a.grid, renormalize: a.renormalize, seed: a.seed };
    let (grid, manifest) = fit_dataset(&a.input, &opts).with_context(|| format!("fitting {}", a.input.display()))?;
    fs::create_dir_all(&a.output_dir).with_context(|| format!("creating {}", a.output_dir.display()))?;
    let grid_path = a.output_dir.join(format!("{}_grid.csv", a.prefix));
    let manifest_path = a.output_dir.join(format!("{}_manifest.json", a.prefix));
    grid.write_csv(BufWriter::new(create(&grid_path)?))?;
    let mut out = BufWriter::new(create(&manifest_path)?);
    serde_json::to_writer_pretty(&mut out, &manifest)?;
    writeln!(out)?;
    info!("fit {} in {:.2}s", manifest.estimator, manifest.fit_seconds);
    println!("{}", grid_path.display());
    println!("{}", manifest_path.display());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => BenchmarkConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?,
        None => BenchmarkConfig::default(),
    };
    let overrides = [
        ("copulas", a.copulas),
        ("estimators", a.estimators),
        ("n", a.n.map(|v| v.to_string())),
        ("replications", a.replications.map(|v| v.to_string())),
        ("grid", a.grid.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v).with_context(|| format!("--{key}"))?;
        }
    }
    if let Some(dir) = a.output_dir {
        cfg.output_dir = dir;
    }
    let report = run_benchmark(&cfg)?;
    let path = write_report(&cfg, &report)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{:<28} {:<18} {:>10} {:>10} {:>9} {:>5}", "copula", "estimator", "mise", "stderr", "relative", "fail")?;
    for c in &report.cells {
        let rel = c.relative_to_mirror.map_or_else(|| "-".to_string(), |r| format!("{r:.3}"));
        writeln!(
            out,
            "{:<28} {:<18} {:>10.5} {:>10.5} {:>9} {:>5}",
            c.copula, c.estimator, c.mise, c.stderr, rel, c.failures
        )?;
    }
    writeln!(out, "report written to {}", path.display())?;
    Ok(())
}

fn ise(a: IseArgs) -> Result<()> {
    let est = DensityGrid::read_csv_path(&a.estimate).with_context(|| format!("reading {}", a.estimate.display()))?;
    let truth = match (&a.truth, &a.copula) {
        (Some(path), _) => DensityGrid::read_csv_path(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(model)) => {
            if est.kind() != GridKind::Lattice {
                bail!("the estimate is not on the ISE lattice");
            }
            DensityGrid::tabulate(est.n(), GridKind::Lattice, |u, v| model.density(u, v))?
        }
        (None, None) => unreachable!("clap requires one of the two"),
    };
    println!("{}", ise_grid(&est, &truth)?);
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}
