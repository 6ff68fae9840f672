//! Hyperspectral cube container and its per-band Fourier representation.
//!
//! Cubes are stored band-major: band, then row, then column. The band-major
//! matricization is the `bands x (height*width)` matrix whose row `l` is band
//! `l` flattened row by row.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HsError, Result};
use crate::fft::Fft2;

/// Imaginary residuals up to this (relative) size are silently discarded by
/// [`idft2_per_band`].
pub const IMAG_DISCARD_TOL: f64 = 1e-9;
/// Imaginary residuals above this (relative) size are reported as errors.
pub const IMAG_ERROR_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(bands: usize, height: usize, width: usize) -> Self {
        Self {
            bands,
            height,
            width,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.bands * self.pixels()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.height == 0 || self.width == 0 {
            return Err(HsError::Dimension(format!(
                "all dimensions must be >= 1, got {self}"
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.bands, self.height, self.width)
    }
}

/// A real-valued hyperspectral cube (`bands x height x width`).
///
/// Every public constructor rejects zero dimensions and non-finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    dims: Dims,
    data: Vec<f64>,
}

impl HsiCube {
    /// `cube_new`: a cube with every entry equal to `fill`.
    pub fn new(bands: usize, height: usize, width: usize, fill: f64) -> Result<Self> {
        let dims = Dims::new(bands, height, width);
        dims.validate()?;
        if !fill.is_finite() {
            return Err(HsError::NonFinite(0));
        }
        Ok(Self {
            dims,
            data: vec![fill; dims.len()],
        })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::new(dims.bands, dims.height, dims.width, 0.0)
    }

    pub fn from_vec(bands: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let dims = Dims::new(bands, height, width);
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(HsError::mismatch(
                format!("{} values for {dims}", dims.len()),
                data.len(),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(HsError::NonFinite(i));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(
        bands: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(bands * height * width);
        for b in 0..bands {
            for r in 0..height {
                for c in 0..width {
                    data.push(f(b, r, c));
                }
            }
        }
        Self::from_vec(bands, height, width, data)
    }

    /// Internal constructor for operator outputs; finiteness follows from
    /// finite inputs and is only checked in debug builds.
    pub(crate) fn from_parts(dims: Dims, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bands(&self) -> usize {
        self.dims.bands
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn pixels(&self) -> usize {
        self.dims.pixels()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.data[(band * self.dims.height + row) * self.dims.width + col]
    }

    pub fn band(&self, band: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[band * n..(band + 1) * n]
    }

    pub fn bands_iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.pixels())
    }

    /// Spectrum of pixel `(row, col)`.
    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f64> {
        let n = self.pixels();
        let p = row * self.dims.width + col;
        (0..self.dims.bands).map(|b| self.data[b * n + p]).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &HsiCube) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_same(&self, other: &HsiCube) -> Result<()> {
        if self.dims != other.dims {
            return Err(HsError::mismatch(self.dims, other.dims));
        }
        Ok(())
    }

    pub fn check_dims(&self, dims: Dims) -> Result<()> {
        if self.dims != dims {
            return Err(HsError::mismatch(dims, self.dims));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> HsiCube {
        HsiCube::from_parts(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &HsiCube, f: impl Fn(f64, f64) -> f64) -> Result<HsiCube> {
        self.check_same(other)?;
        Ok(HsiCube::from_parts(
            self.dims,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn sub(&self, other: &HsiCube) -> Result<HsiCube> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &HsiCube) -> Result<HsiCube> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, alpha: f64) -> HsiCube {
        self.map(|v| alpha * v)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &HsiCube) -> Result<HsiCube> {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    /// Band-major matricization (`bands x pixels`).
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dims.bands, self.pixels(), &self.data)
    }

    /// Inverse of [`HsiCube::to_matrix`].
    pub fn from_matrix(m: &DMatrix<f64>, height: usize, width: usize) -> Result<Self> {
        let bands = m.nrows();
        if m.ncols() != height * width {
            return Err(HsError::mismatch(
                format!("{} columns", height * width),
                m.ncols(),
            ));
        }
        let mut data = Vec::with_capacity(bands * height * width);
        for b in 0..bands {
            data.extend(m.row(b).iter().copied());
        }
        Self::from_vec(bands, height, width, data)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Per-band 2D DFT coefficients of a cube, band-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqCube {
    dims: Dims,
    data: Vec<Complex64>,
}

impl FreqCube {
    pub fn from_vec(dims: Dims, data: Vec<Complex64>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(HsError::mismatch(dims.len(), data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn band(&self, band: usize) -> &[Complex64] {
        let n = self.dims.pixels();
        &self.data[band * n..(band + 1) * n]
    }

    #[inline]
    pub fn get(&self, band: usize, kr: usize, kc: usize) -> Complex64 {
        self.data[(band * self.dims.height + kr) * self.dims.width + kc]
    }
}

/// Forward per-band 2D DFT (unnormalized): coefficient `(0,0)` of each band is
/// the band sum.
pub fn dft2_per_band(cube: &HsiCube) -> FreqCube {
    let plan = Fft2::new(cube.height(), cube.width());
    dft2_with(&plan, cube)
}

pub(crate) fn dft2_with(plan: &Fft2, cube: &HsiCube) -> FreqCube {
    let n = cube.pixels();
    let mut data: Vec<Complex64> = cube.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    data.par_chunks_mut(n).for_each(|plane| plan.forward(plane));
    FreqCube {
        dims: cube.dims,
        data,
    }
}

/// Inverse per-band 2D DFT (scaled by `1/(height*width)`), returning the real
/// part. Fails with [`HsError::SymmetryViolation`] when the imaginary residual
/// exceeds [`IMAG_ERROR_TOL`] relative to the output scale.
pub fn idft2_per_band(fc: &FreqCube) -> Result<HsiCube> {
    let plan = Fft2::new(fc.dims.height, fc.dims.width);
    idft2_with(&plan, fc.clone())
}

pub(crate) fn idft2_with(plan: &Fft2, mut fc: FreqCube) -> Result<HsiCube> {
    let n = fc.dims.pixels();
    fc.data
        .par_chunks_mut(n)
        .for_each(|plane| plan.inverse(plane));
    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for v in &fc.data {
        max_re = max_re.max(v.re.abs());
        max_im = max_im.max(v.im.abs());
    }
    let residual = max_im / max_re.max(1.0);
    if residual > IMAG_ERROR_TOL || !residual.is_finite() {
        return Err(HsError::SymmetryViolation { residual });
    }
    if residual > IMAG_DISCARD_TOL {
        log::warn!("discarding imaginary residual {residual:e} after inverse DFT");
    }
    let data: Vec<f64> = fc.data.iter().map(|v| v.re).collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(HsError::NonFinite(i));
    }
    Ok(HsiCube {
        dims: fc.dims,
        data,
    })
}
