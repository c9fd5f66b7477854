//! Density surfaces tabulated on square lattices of the unit square.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Where the `N` nodes of each axis sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// `k / (N + 1)`, `k = 1..=N`: the ISE lattice.
    Lattice,
    /// `(k − ½) / N`, `k = 1..=N`: cell midpoints, used for quadrature.
    Midpoint,
}

impl GridKind {
    pub fn node(self, n: usize, k: usize) -> f64 {
        match self {
            GridKind::Lattice => (k + 1) as f64 / (n + 1) as f64,
            GridKind::Midpoint => (k as f64 + 0.5) / n as f64,
        }
    }
}

/// `N × N` values, row-major with `u` as the outer index.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    n: usize,
    kind: GridKind,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(n: usize, kind: GridKind, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::GridMismatch(format!("grid size must be at least 2, got {n}")));
        }
        if values.len() != n * n {
            return Err(Error::GridMismatch(format!(
                "expected {} values for N={n}, got {}",
                n * n,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::GridMismatch(format!(
                "value {} at index {i} is not finite and nonnegative",
                values[i]
            )));
        }
        Ok(Self { n, kind, values })
    }

    /// Tabulates `f` over the grid, in parallel.
    pub fn tabulate<F>(n: usize, kind: GridKind, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<f64> + Sync,
    {
        let values = (0..n * n)
            .into_par_iter()
            .map(|idx| f(kind.node(n, idx / n), kind.node(n, idx % n)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, kind, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn node(&self, k: usize) -> f64 {
        self.kind.node(self.n, k)
    }

    /// Equal-weight quadrature `Σ value / N²`; the midpoint rule on a
    /// [`GridKind::Midpoint`] grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / (self.n * self.n) as f64
    }

    pub fn mean(&self) -> f64 {
        self.integral()
    }

    /// Rescales so that [`DensityGrid::integral`] is 1.
    pub fn renormalize(&self) -> Result<Self> {
        let total = self.integral();
        if !(total > 0.0) {
            return Err(Error::Degenerate("cannot renormalize an all-zero grid".into()));
        }
        Ok(Self {
            n: self.n,
            kind: self.kind,
            values: self.values.iter().map(|v| v / total).collect(),
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["u", "v", "value"])?;
        for i in 0..self.n {
            for j in 0..self.n {
                w.write_record([
                    self.node(i).to_string(),
                    self.node(j).to_string(),
                    self.get(i, j).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a grid written by [`DensityGrid::write_csv`]; the size and node
    /// placement are inferred from the coordinates.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 3 || &headers[0] != "u" || &headers[1] != "v" || &headers[2] != "value" {
            return Err(Error::Parse("grid CSV must have header u,v,value".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::InvalidRow { row: line, reason: "non-numeric field".into() })
            };
            rows.push((field(0)?, field(1)?, field(2)?));
        }
        let n = (rows.len() as f64).sqrt().round() as usize;
        if n * n != rows.len() || n < 2 {
            return Err(Error::GridMismatch(format!("{} rows do not form a square grid", rows.len())));
        }
        let kind = [GridKind::Lattice, GridKind::Midpoint]
            .into_iter()
            .find(|k| (rows[0].0 - k.node(n, 0)).abs() < 1e-9)
            .ok_or_else(|| Error::GridMismatch("unrecognized node placement".into()))?;
        for (idx, &(u, v, _)) in rows.iter().enumerate() {
            if (u - kind.node(n, idx / n)).abs() > 1e-9 || (v - kind.node(n, idx % n)).abs() > 1e-9 {
                return Err(Error::InvalidRow {
                    row: idx + 2,
                    reason: format!("coordinates ({u}, {v}) off the N={n} grid"),
                });
            }
        }
        Self::new(n, kind, rows.into_iter().map(|r| r.2).collect())
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Integrated squared error on the ISE lattice:
/// `(N+1)⁻² Σ (est − truth)²`.
pub fn ise_grid(est: &DensityGrid, truth: &DensityGrid) -> Result<f64> {
    if est.n != truth.n || est.kind != truth.kind {
        return Err(Error::GridMismatch(format!(
            "estimate is {:?} N={}, truth is {:?} N={}",
            est.kind, est.n, truth.kind, truth.n
        )));
    }
    let sq: f64 = est.values.iter().zip(&truth.values).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / ((est.n + 1) * (est.n + 1)) as f64)
}
