//! Symmetric positive-definite 2×2 bandwidth matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The matrix `[[h11, h12], [h12, h22]]`, where `h11 = h₁²` and `h22 = h₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthMatrix {
    h11: f64,
    h22: f64,
    h12: f64,
}

impl BandwidthMatrix {
    pub fn new(h11: f64, h22: f64, h12: f64) -> Result<Self> {
        let ok = h11.is_finite()
            && h22.is_finite()
            && h12.is_finite()
            && h11 > 0.0
            && h22 > 0.0
            && h11 * h22 - h12 * h12 > 0.0;
        if !ok {
            return Err(Error::NotPositiveDefinite { h11, h22, h12 });
        }
        Ok(Self { h11, h22, h12 })
    }

    /// `h² I`.
    pub fn isotropic(h: f64) -> Result<Self> {
        Self::new(h * h, h * h, 0.0)
    }

    pub fn from_matrix(m: [[f64; 2]; 2]) -> Result<Self> {
        if (m[0][1] - m[1][0]).abs() > 1e-12 * (m[0][1].abs() + m[1][0].abs()).max(1e-300) {
            return Err(Error::InvalidParameter("bandwidth matrix must be symmetric".into()));
        }
        Self::new(m[0][0], m[1][1], 0.5 * (m[0][1] + m[1][0]))
    }

    /// `Wᵀ diag(d) W` for an orthonormal `W`, i.e. a diagonal bandwidth given
    /// in coordinates `W z` expressed back in the original coordinates.
    pub fn from_rotated(w: [[f64; 2]; 2], d: [f64; 2]) -> Result<Self> {
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = w[0][i] * d[0] * w[0][j] + w[1][i] * d[1] * w[1][j];
            }
        }
        Self::new(m[0][0], m[1][1], 0.5 * (m[0][1] + m[1][0]))
    }

    pub fn h11(&self) -> f64 {
        self.h11
    }

    pub fn h22(&self) -> f64 {
        self.h22
    }

    pub fn h12(&self) -> f64 {
        self.h12
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.h11, self.h12], [self.h12, self.h22]]
    }

    pub fn det(&self) -> f64 {
        self.h11 * self.h22 - self.h12 * self.h12
    }

    pub fn inverse(&self) -> [[f64; 2]; 2] {
        let d = self.det();
        [[self.h22 / d, -self.h12 / d], [-self.h12 / d, self.h11 / d]]
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = H`, as `[l11, l21, l22]`.
    pub fn cholesky(&self) -> [f64; 3] {
        let l11 = self.h11.sqrt();
        let l21 = self.h12 / l11;
        let l22 = (self.h22 - l21 * l21).sqrt();
        [l11, l21, l22]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.h11 * factor, self.h22 * factor, self.h12 * factor)
    }
}

/// Lower-triangular factor of a bandwidth, used to whiten offsets.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Whitener {
    l11: f64,
    l21: f64,
    l22: f64,
}

impl Whitener {
    pub(crate) fn new(h: &BandwidthMatrix) -> Self {
        let [l11, l21, l22] = h.cholesky();
        Self { l11, l21, l22 }
    }

    /// `L⁻¹ z`.
    #[inline]
    pub(crate) fn apply(&self, z0: f64, z1: f64) -> (f64, f64) {
        let y0 = z0 / self.l11;
        (y0, (z1 - self.l21 * y0) / self.l22)
    }

    /// `|L| = |H|^{1/2}`.
    pub(crate) fn det(&self) -> f64 {
        self.l11 * self.l22
    }

    /// `L⁻¹` as a dense matrix.
    pub(crate) fn inverse(&self) -> [[f64; 2]; 2] {
        [
            [1.0 / self.l11, 0.0],
            [-self.l21 / (self.l11 * self.l22), 1.0 / self.l22],
        ]
    }
}
