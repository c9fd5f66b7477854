//! Pseudo-observations, the probit transform and the empirical copula.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{domain, Error, Result};
use crate::normal::probit_unchecked;

/// An observed bivariate sample with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl RawSample {
    /// Builds a sample from paired coordinates. Rows are numbered from 1 in
    /// diagnostics.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidParameter(format!(
                "coordinate lengths differ: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidParameter("sample is empty".into()));
        }
        for (i, (a, b)) in x.iter().zip(&y).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    reason: format!("non-finite coordinate ({a}, {b})"),
                });
            }
        }
        Ok(Self { x, y })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (x, y) = pairs.iter().copied().unzip();
        Self::new(x, y)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Reads a two-column numeric CSV. A first line that does not parse as
    /// two numbers is treated as a header. Row numbers in errors are 1-based
    /// file line numbers.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 1;
            let rec = rec?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            if rec.len() < 2 {
                return Err(Error::InvalidRow {
                    row: line,
                    reason: format!("expected two columns, found {}", rec.len()),
                });
            }
            let a = rec[0].parse::<f64>();
            let b = rec[1].parse::<f64>();
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    if !a.is_finite() || !b.is_finite() {
                        return Err(Error::InvalidRow {
                            row: line,
                            reason: format!("non-finite value ({a}, {b})"),
                        });
                    }
                    x.push(a);
                    y.push(b);
                }
                _ if line == 1 => continue, // header
                _ => {
                    return Err(Error::InvalidRow {
                        row: line,
                        reason: format!("non-numeric values \"{},{}\"", &rec[0], &rec[1]),
                    })
                }
            }
        }
        Self::new(x, y)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Rank-based observations (û, v̂) in the open unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl PseudoSample {
    /// Wraps coordinates already in (0,1)², for example draws from a copula
    /// sampler or hand-built fixtures.
    pub fn from_uniforms(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() || u.is_empty() {
            return Err(Error::InvalidParameter(
                "pseudo-sample margins must be non-empty and of equal length".into(),
            ));
        }
        for (i, (&a, &b)) in u.iter().zip(&v).enumerate() {
            if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    reason: format!("({a}, {b}) is not inside the open unit square"),
                });
            }
        }
        Ok(Self { u, v })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.u.iter().copied().zip(self.v.iter().copied())
    }

    /// Two columns under a `u,v` header, full precision.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["u", "v"])?;
        for (u, v) in self.pairs() {
            w.write_record([u.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mid-ranks of `values`, 1-based.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // ordinal ranks i+1..=j share their average
        let r = 0.5 * ((i + 1) + j) as f64;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Pseudo-observations rank/(n+1) per margin, ties receiving mid-ranks.
pub fn pseudo_observations(raw: &RawSample) -> PseudoSample {
    let m = raw.len() as f64 + 1.0;
    let u = mid_ranks(raw.x()).into_iter().map(|r| r / m).collect();
    let v = mid_ranks(raw.y()).into_iter().map(|r| r / m).collect();
    PseudoSample { u, v }
}

/// Replaces a copula draw by its normalized ranks.
pub fn rank_uniforms(u: &[f64], v: &[f64]) -> Result<PseudoSample> {
    let raw = RawSample::new(u.to_vec(), v.to_vec())?;
    Ok(pseudo_observations(&raw))
}

/// The probit-transformed sample (ŝ, t̂) = (Φ⁻¹(û), Φ⁻¹(v̂)).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSample {
    s: Vec<f64>,
    t: Vec<f64>,
}

impl TransformedSample {
    /// Builds a sample directly in the transformed domain.
    pub fn from_coords(s: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if s.len() != t.len() || s.is_empty() {
            return Err(Error::InvalidParameter(
                "transformed coordinates must be non-empty and of equal length".into(),
            ));
        }
        if let Some(i) = s.iter().chain(&t).position(|z| !z.is_finite()) {
            return Err(Error::InvalidRow {
                row: i % s.len() + 1,
                reason: "non-finite transformed coordinate".into(),
            });
        }
        Ok(Self { s, t })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.s.iter().copied().zip(self.t.iter().copied())
    }

    /// Sample mean and covariance (divisor n − 1).
    pub fn moments(&self) -> ([f64; 2], [[f64; 2]; 2]) {
        let n = self.len() as f64;
        let ms = self.s.iter().sum::<f64>() / n;
        let mt = self.t.iter().sum::<f64>() / n;
        let (mut css, mut ctt, mut cst) = (0.0, 0.0, 0.0);
        for (a, b) in self.points() {
            let (da, db) = (a - ms, b - mt);
            css += da * da;
            ctt += db * db;
            cst += da * db;
        }
        let d = (n - 1.0).max(1.0);
        ([ms, mt], [[css / d, cst / d], [cst / d, ctt / d]])
    }
}

/// Elementwise probit of both margins.
pub fn transform(ps: &PseudoSample) -> TransformedSample {
    TransformedSample {
        s: ps.u.iter().map(|&u| probit_unchecked(u)).collect(),
        t: ps.v.iter().map(|&v| probit_unchecked(v)).collect(),
    }
}

/// Empirical copula (1/n)·#{i : ûᵢ ≤ u, v̂ᵢ ≤ v}.
pub fn empirical_copula(ps: &PseudoSample, u: f64, v: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(domain("u", u, "empirical copula argument must lie in [0,1]"));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(domain("v", v, "empirical copula argument must lie in [0,1]"));
    }
    let count = ps.pairs().filter(|&(a, b)| a <= u && b <= v).count();
    Ok(count as f64 / ps.len() as f64)
}
