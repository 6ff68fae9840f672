//! Forward degradation model and its adjoints.
//!
//! A high-resolution cube `X` is observed twice:
//!
//! * `Y = downsample(blur(X))`, the low-resolution hyperspectral image;
//! * `Z = R X`, the high-resolution RGB image, where `R` maps each pixel
//!   spectrum (B channels) to b < B colour channels.
//!
//! The blur is a 2D convolution shared by all bands. With periodic
//! boundaries it is diagonalized by the 2D DFT, which both the blur itself and
//! the fast X-step solver rely on; border pixels are therefore a modelling
//! approximation on non-periodic data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::{zero_boundary_apply, Circulant2d, Tap};
use crate::cube::{Dims, HsiCube};
use crate::error::{HsError, Result};
use num_complex::Complex64;

/// How a blur kernel is specified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    /// Mean over a `size x size` block anchored at its top-left pixel, so
    /// that blur followed by phase-(0,0) downsampling by `size` averages
    /// non-overlapping blocks.
    UniformBlock(usize),
    /// Centered, truncated Gaussian with taps in `[-support, support]^2`.
    Gaussian { sigma: f64, support: usize },
    /// Row-major `rows x cols` grid centered at `(rows/2, cols/2)`;
    /// normalized to unit sum.
    Custom {
        rows: usize,
        cols: usize,
        values: Vec<f64>,
    },
}

impl KernelSpec {
    /// Convolution taps, normalized to unit sum.
    pub fn taps(&self) -> Result<Vec<Tap>> {
        let mut taps = match self {
            KernelSpec::UniformBlock(k) => {
                if *k == 0 {
                    return Err(HsError::InvalidParameter("block size must be >= 1".into()));
                }
                let w = 1.0 / (*k * *k) as f64;
                let k = *k as isize;
                let mut taps = Vec::with_capacity((k * k) as usize);
                for dr in 0..k {
                    for dc in 0..k {
                        taps.push(Tap {
                            dr: -dr,
                            dc: -dc,
                            weight: w,
                        });
                    }
                }
                return Ok(taps);
            }
            KernelSpec::Gaussian { sigma, support } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(HsError::InvalidParameter(format!(
                        "gaussian sigma must be positive, got {sigma}"
                    )));
                }
                let s = *support as isize;
                let mut taps = Vec::new();
                for dr in -s..=s {
                    for dc in -s..=s {
                        let d2 = (dr * dr + dc * dc) as f64;
                        taps.push(Tap {
                            dr,
                            dc,
                            weight: (-d2 / (2.0 * sigma * sigma)).exp(),
                        });
                    }
                }
                taps
            }
            KernelSpec::Custom { rows, cols, values } => {
                if *rows == 0 || *cols == 0 || values.len() != rows * cols {
                    return Err(HsError::InvalidParameter(format!(
                        "custom kernel needs {rows}x{cols} values, got {}",
                        values.len()
                    )));
                }
                let (r0, c0) = ((rows / 2) as isize, (cols / 2) as isize);
                values
                    .iter()
                    .enumerate()
                    .map(|(i, &weight)| Tap {
                        dr: (i / cols) as isize - r0,
                        dc: (i % cols) as isize - c0,
                        weight,
                    })
                    .collect()
            }
        };
        let sum: f64 = taps.iter().map(|t| t.weight).sum();
        if !sum.is_finite() || sum.abs() < 1e-12 {
            return Err(HsError::InvalidParameter(format!(
                "blur kernel must have non-zero finite sum, got {sum}"
            )));
        }
        for t in &mut taps {
            t.weight /= sum;
        }
        Ok(taps)
    }

    /// Largest tap offset, i.e. the width of the image border affected by
    /// the boundary convention.
    pub fn radius(&self) -> usize {
        match self {
            KernelSpec::UniformBlock(k) => k.saturating_sub(1),
            KernelSpec::Gaussian { support, .. } => *support,
            KernelSpec::Custom { rows, cols, .. } => rows.max(cols) / 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Circular convolution; required by the fast Sylvester solver.
    #[default]
    Periodic,
    /// Zero padding outside the image (non-circulant).
    Zero,
}

/// Spatial blur `B`, held as the frequency response of its kernel.
#[derive(Clone, Debug)]
pub struct BlurOperator {
    spec: KernelSpec,
    boundary: Boundary,
    op: Circulant2d,
}

impl BlurOperator {
    pub fn new(spec: KernelSpec, height: usize, width: usize) -> Result<Self> {
        Self::with_boundary(spec, height, width, Boundary::Periodic)
    }

    pub fn with_boundary(
        spec: KernelSpec,
        height: usize,
        width: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        let taps = spec.taps()?;
        let op = Circulant2d::new(taps, height, width)?;
        Ok(Self { spec, boundary, op })
    }

    /// The identity blur (single unit tap).
    pub fn identity(height: usize, width: usize) -> Result<Self> {
        Self::new(KernelSpec::UniformBlock(1), height, width)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_circulant(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn height(&self) -> usize {
        self.op.height()
    }

    pub fn width(&self) -> usize {
        self.op.width()
    }

    /// Diagonal of `F B F^-1`, row-major over frequencies.
    pub fn freq_response(&self) -> &[Complex64] {
        self.op.response()
    }

    pub fn taps(&self) -> &[Tap] {
        self.op.taps()
    }

    pub(crate) fn circulant(&self) -> &Circulant2d {
        &self.op
    }

    /// `blur_apply`: per-band convolution.
    pub fn apply(&self, x: &HsiCube) -> Result<HsiCube> {
        match self.boundary {
            Boundary::Periodic => self.op.apply(x),
            Boundary::Zero => {
                self.check(x)?;
                Ok(zero_boundary_apply(self.op.taps(), x, false))
            }
        }
    }

    /// `blur_adjoint`: per-band correlation with the same kernel.
    pub fn adjoint(&self, x: &HsiCube) -> Result<HsiCube> {
        match self.boundary {
            Boundary::Periodic => self.op.adjoint(x),
            Boundary::Zero => {
                self.check(x)?;
                Ok(zero_boundary_apply(self.op.taps(), x, true))
            }
        }
    }

    fn check(&self, x: &HsiCube) -> Result<()> {
        if x.height() != self.height() || x.width() != self.width() {
            return Err(HsError::mismatch(
                format!("{}x{} image", self.height(), self.width()),
                format!("{}x{}", x.height(), x.width()),
            ));
        }
        Ok(())
    }
}

/// Spatial decimation `S`: keeps pixel `(s*i + phase.0, s*j + phase.1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Downsampler {
    factor: usize,
    phase: (usize, usize),
}

impl Downsampler {
    pub fn new(factor: usize) -> Result<Self> {
        Self::with_phase(factor, (0, 0))
    }

    pub fn with_phase(factor: usize, phase: (usize, usize)) -> Result<Self> {
        if factor == 0 {
            return Err(HsError::InvalidParameter(
                "downsampling factor must be >= 1".into(),
            ));
        }
        if phase.0 >= factor || phase.1 >= factor {
            return Err(HsError::InvalidParameter(format!(
                "phase {phase:?} outside [0, {factor})"
            )));
        }
        Ok(Self { factor, phase })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn phase(&self) -> (usize, usize) {
        self.phase
    }

    /// Low-resolution dims for a high-resolution cube.
    pub fn lr_dims(&self, hr: Dims) -> Result<Dims> {
        let s = self.factor;
        if !hr.height.is_multiple_of(s) || !hr.width.is_multiple_of(s) {
            return Err(HsError::Indivisible {
                what: "image",
                height: hr.height,
                width: hr.width,
                factor: s,
            });
        }
        Ok(Dims::new(hr.bands, hr.height / s, hr.width / s))
    }

    pub fn apply(&self, x: &HsiCube) -> Result<HsiCube> {
        let lr = self.lr_dims(x.dims())?;
        let s = self.factor;
        let (pr, pc) = self.phase;
        let mut out = Vec::with_capacity(lr.len());
        for band in x.bands_iter() {
            for i in 0..lr.height {
                let row = &band[(s * i + pr) * x.width()..];
                out.extend((0..lr.width).map(|j| row[s * j + pc]));
            }
        }
        Ok(HsiCube::from_parts(lr, out))
    }

    /// `upsample_adjoint` (S^T): zero insertion onto an `hr_height x hr_width` grid.
    pub fn adjoint(&self, y: &HsiCube, hr_height: usize, hr_width: usize) -> Result<HsiCube> {
        let hr = Dims::new(y.bands(), hr_height, hr_width);
        let lr = self.lr_dims(hr)?;
        y.check_dims(lr)?;
        let s = self.factor;
        let (pr, pc) = self.phase;
        let mut out = vec![0.0; hr.len()];
        for (dst, src) in out.chunks_exact_mut(hr.pixels()).zip(y.bands_iter()) {
            for i in 0..lr.height {
                for j in 0..lr.width {
                    dst[(s * i + pr) * hr_width + s * j + pc] = src[i * lr.width + j];
                }
            }
        }
        Ok(HsiCube::from_parts(hr, out))
    }
}

/// Spectral response `R` (b x B, row-major), rows normalized to unit sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResponse {
    rows: usize,
    cols: usize,
    matrix: Vec<f64>,
}

impl SpectralResponse {
    /// Validates non-negativity and `b < B`, then normalizes every row to
    /// sum 1. A row with zero sum is rejected.
    pub fn new(rows: usize, cols: usize, matrix: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || matrix.len() != rows * cols {
            return Err(HsError::InvalidSrf(format!(
                "need {rows}x{cols} entries, got {}",
                matrix.len()
            )));
        }
        if rows >= cols {
            return Err(HsError::InvalidSrf(format!(
                "colour channels ({rows}) must be fewer than spectral bands ({cols})"
            )));
        }
        if let Some(v) = matrix.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(HsError::InvalidSrf(format!(
                "entries must be finite and non-negative, found {v}"
            )));
        }
        let mut matrix = matrix;
        for (i, row) in matrix.chunks_exact_mut(cols).enumerate() {
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(HsError::InvalidSrf(format!("row {i} sums to zero")));
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Self { rows, cols, matrix })
    }

    /// Three Gaussian channels centered at 450/550/650 nm over `bands`
    /// channels evenly spaced on 400..=700 nm.
    pub fn default_rgb(bands: usize) -> Result<Self> {
        const CENTERS: [f64; 3] = [650.0, 550.0, 450.0];
        const SIGMA_NM: f64 = 40.0;
        if bands < 4 {
            return Err(HsError::InvalidSrf(format!(
                "default RGB response needs at least 4 bands, got {bands}"
            )));
        }
        let wl = band_wavelengths(bands, 400.0, 700.0);
        let mut m = Vec::with_capacity(3 * bands);
        for c in CENTERS {
            m.extend(
                wl.iter()
                    .map(|w| (-(w - c) * (w - c) / (2.0 * SIGMA_NM * SIGMA_NM)).exp()),
            );
        }
        Self::new(3, bands, m)
    }

    /// Number of colour channels `b`.
    pub fn out_bands(&self) -> usize {
        self.rows
    }

    /// Number of spectral bands `B`.
    pub fn in_bands(&self) -> usize {
        self.cols
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.cols + col]
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.matrix)
    }

    /// `srf_apply`: `Z = R X` pixel by pixel.
    pub fn apply(&self, x: &HsiCube) -> Result<HsiCube> {
        if x.bands() != self.cols {
            return Err(HsError::mismatch(format!("{} bands", self.cols), x.bands()));
        }
        Ok(band_mix(
            x,
            self.rows,
            |o, i| self.matrix[o * self.cols + i],
            self.cols,
        ))
    }

    /// `srf_adjoint`: `R^T Z` pixel by pixel.
    pub fn adjoint(&self, z: &HsiCube) -> Result<HsiCube> {
        if z.bands() != self.rows {
            return Err(HsError::mismatch(format!("{} bands", self.rows), z.bands()));
        }
        Ok(band_mix(
            z,
            self.cols,
            |o, i| self.matrix[i * self.cols + o],
            self.rows,
        ))
    }
}

/// Per-pixel linear map across bands: `out[o] = sum_i coef(o, i) * x[i]`.
pub(crate) fn band_mix(
    x: &HsiCube,
    out_bands: usize,
    coef: impl Fn(usize, usize) -> f64 + Sync,
    in_bands: usize,
) -> HsiCube {
    let n = x.pixels();
    let mut out = vec![0.0; out_bands * n];
    out.par_chunks_mut(n).enumerate().for_each(|(o, dst)| {
        for i in 0..in_bands {
            let w = coef(o, i);
            if w == 0.0 {
                continue;
            }
            for (d, s) in dst.iter_mut().zip(x.band(i)) {
                *d += w * s;
            }
        }
    });
    HsiCube::from_parts(Dims::new(out_bands, x.height(), x.width()), out)
}

/// Centers of `bands` channels evenly spaced from `lo` to `hi` nm inclusive.
pub fn band_wavelengths(bands: usize, lo: f64, hi: f64) -> Vec<f64> {
    if bands == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (bands - 1) as f64;
    (0..bands).map(|i| lo + step * i as f64).collect()
}

/// The known acquisition model `(B, S, R)` plus an optional noise level.
#[derive(Clone, Debug)]
pub struct DegradationModel {
    pub blur: BlurOperator,
    pub down: Downsampler,
    pub srf: SpectralResponse,
    /// Standard deviation of additive Gaussian noise; 0 for noise-free.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl DegradationModel {
    pub fn new(blur: BlurOperator, down: Downsampler, srf: SpectralResponse) -> Self {
        Self {
            blur,
            down,
            srf,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.noise_seed = seed;
        self
    }

    pub fn hr_dims(&self) -> Dims {
        Dims::new(self.srf.in_bands(), self.blur.height(), self.blur.width())
    }

    pub fn lr_dims(&self) -> Result<Dims> {
        self.down.lr_dims(self.hr_dims())
    }

    pub fn rgb_dims(&self) -> Dims {
        Dims::new(self.srf.out_bands(), self.blur.height(), self.blur.width())
    }

    /// Check that `x` matches the high-resolution grid of the model.
    pub fn check_hr(&self, x: &HsiCube) -> Result<()> {
        x.check_dims(self.hr_dims())
    }

    /// `x -> S(B(x))`, the spatial part of the model.
    pub fn spatial(&self, x: &HsiCube) -> Result<HsiCube> {
        self.down.apply(&self.blur.apply(x)?)
    }

    /// Adjoint of [`DegradationModel::spatial`].
    pub fn spatial_adjoint(&self, y: &HsiCube) -> Result<HsiCube> {
        let up = self
            .down
            .adjoint(y, self.blur.height(), self.blur.width())?;
        self.blur.adjoint(&up)
    }

    /// `degrade`: `(Y, Z) = (S B x, R x)`, plus noise when configured.
    pub fn degrade(&self, x: &HsiCube) -> Result<(HsiCube, HsiCube)> {
        self.check_hr(x)?;
        let mut y = self.spatial(x)?;
        let mut z = self.srf.apply(x)?;
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma)
                .map_err(|e| HsError::InvalidParameter(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
            for v in y.data_mut().iter_mut().chain(z.data_mut().iter_mut()) {
                *v += normal.sample(&mut rng);
            }
        } else if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(HsError::InvalidParameter(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok((y, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn rel(a: &HsiCube, b: &HsiCube) -> f64 {
        a.sub(b).unwrap().norm() / b.norm().max(1e-300)
    }

    #[test]
    fn uniform_blur_preserves_constant() {
        let b = BlurOperator::new(KernelSpec::UniformBlock(32), 64, 64).unwrap();
        let x = HsiCube::new(2, 64, 64, 0.3).unwrap();
        let y = b.apply(&x).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!((b.freq_response()[0].re - 1.0).abs() < 1e-12);
        let y = b.adjoint(&x).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn impulse_response_is_shifted_kernel() {
        let b = BlurOperator::new(KernelSpec::UniformBlock(3), 6, 6).unwrap();
        let x = oracle::impulse(1, 6, 6);
        let y = b.apply(&x).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                let inside = [0, 4, 5].contains(&r) && [0, 4, 5].contains(&c);
                let want = if inside { 1.0 / 9.0 } else { 0.0 };
                assert!((y.get(0, r, c) - want).abs() < 1e-14, "({r},{c})");
            }
        }
    }

    #[test]
    fn blur_matches_spatial_oracle() {
        let spec = KernelSpec::Gaussian {
            sigma: 1.2,
            support: 2,
        };
        let b = BlurOperator::new(spec, 8, 8).unwrap();
        let x = oracle::random_cube(2, 8, 8, 1);
        let want = oracle::circular_conv(&x, b.taps());
        assert!(rel(&b.apply(&x).unwrap(), &want) < 1e-10);
    }

    #[test]
    fn symmetric_kernel_is_self_adjoint() {
        let spec = KernelSpec::Custom {
            rows: 3,
            cols: 3,
            values: vec![1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0],
        };
        let b = BlurOperator::new(spec, 7, 9).unwrap();
        let x = oracle::random_cube(2, 7, 9, 4);
        let d = b.apply(&x).unwrap().sub(&b.adjoint(&x).unwrap()).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn asymmetric_kernel_adjoint_identity() {
        let spec = KernelSpec::Custom {
            rows: 3,
            cols: 2,
            values: vec![0.5, 0.1, 0.0, 0.2, 0.15, 0.05],
        };
        for boundary in [Boundary::Periodic, Boundary::Zero] {
            let b = BlurOperator::with_boundary(spec.clone(), 6, 5, boundary).unwrap();
            for seed in 0..10 {
                let x = oracle::random_cube(2, 6, 5, seed);
                let y = oracle::random_cube(2, 6, 5, seed + 100);
                let lhs = b.apply(&x).unwrap().dot(&y).unwrap();
                let rhs = x.dot(&b.adjoint(&y).unwrap()).unwrap();
                assert!((lhs - rhs).abs() <= 1e-10 * x.norm() * y.norm());
            }
        }
    }

    #[test]
    fn zero_boundary_matches_periodic_in_interior() {
        let b0 =
            BlurOperator::with_boundary(KernelSpec::UniformBlock(3), 8, 8, Boundary::Zero).unwrap();
        let bp = BlurOperator::new(KernelSpec::UniformBlock(3), 8, 8).unwrap();
        let x = oracle::random_cube(1, 8, 8, 2);
        let (a, p) = (b0.apply(&x).unwrap(), bp.apply(&x).unwrap());
        // block taps reach two pixels down and right
        for r in 0..6 {
            for c in 0..6 {
                assert!((a.get(0, r, c) - p.get(0, r, c)).abs() < 1e-12);
            }
        }
        assert!((a.get(0, 7, 7) - p.get(0, 7, 7)).abs() > 1e-6);
    }

    #[test]
    fn blur_dim_mismatch() {
        let b = BlurOperator::new(KernelSpec::UniformBlock(2), 8, 8).unwrap();
        assert!(matches!(
            b.apply(&HsiCube::new(1, 8, 4, 0.0).unwrap()),
            Err(HsError::DimMismatch { .. })
        ));
    }

    #[test]
    fn downsample_examples() {
        let x = oracle::random_cube(2, 6, 4, 9);
        let d1 = Downsampler::new(1).unwrap();
        assert_eq!(d1.apply(&x).unwrap(), x);
        assert_eq!(d1.adjoint(&x, 6, 4).unwrap(), x);

        let x = HsiCube::new(31, 512, 512, 0.0).unwrap();
        let y = Downsampler::new(32).unwrap().apply(&x).unwrap();
        assert_eq!(y.dims(), Dims::new(31, 16, 16));

        // 4x4 ramp, value = 4r + c; corners of the 2x2 blocks are 0, 2, 8, 10
        let ramp = HsiCube::from_fn(1, 4, 4, |_, r, c| (4 * r + c) as f64).unwrap();
        let y = Downsampler::new(2).unwrap().apply(&ramp).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 8.0, 10.0]);
        let y = Downsampler::with_phase(2, (1, 0))
            .unwrap()
            .apply(&ramp)
            .unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 12.0, 14.0]);
    }

    #[test]
    fn downsample_rejects_indivisible() {
        let x = HsiCube::new(1, 6, 6, 0.0).unwrap();
        assert!(matches!(
            Downsampler::new(4).unwrap().apply(&x),
            Err(HsError::Indivisible { .. })
        ));
        assert!(Downsampler::new(0).is_err());
        assert!(Downsampler::with_phase(2, (2, 0)).is_err());
    }

    #[test]
    fn upsample_adjoint_properties() {
        let d = Downsampler::with_phase(2, (1, 1)).unwrap();
        for seed in 0..20 {
            let x = oracle::random_cube(3, 6, 8, seed);
            let y = oracle::random_cube(3, 3, 4, seed + 50);
            let lhs = d.apply(&x).unwrap().dot(&y).unwrap();
            let rhs = x.dot(&d.adjoint(&y, 6, 8).unwrap()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-14 * x.norm() * y.norm());
            assert_eq!(d.apply(&d.adjoint(&y, 6, 8).unwrap()).unwrap(), y);
        }
        let y = oracle::random_cube(3, 3, 4, 0);
        assert!(d.adjoint(&y, 6, 6).is_err());
    }

    #[test]
    fn srf_averaging_row() {
        let r = SpectralResponse::new(1, 5, vec![1.0; 5]).unwrap();
        assert!(r.matrix().iter().all(|v| (v - 0.2).abs() < 1e-15));
        let x = HsiCube::new(5, 3, 3, 0.7).unwrap();
        let z = r.apply(&x).unwrap();
        assert_eq!(z.bands(), 1);
        assert!(z.data().iter().all(|v| (v - 0.7).abs() < 1e-12));
        let back = r.adjoint(&HsiCube::new(1, 3, 3, 1.0).unwrap()).unwrap();
        assert_eq!(back.bands(), 5);
        assert!(back.data().iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn srf_matches_dense_matmul() {
        let r = SpectralResponse::default_rgb(31).unwrap();
        let x = oracle::random_cube(31, 5, 4, 21);
        let want = HsiCube::from_matrix(&(r.to_dmatrix() * x.to_matrix()), 5, 4).unwrap();
        assert!(rel(&r.apply(&x).unwrap(), &want) < 1e-12);

        let z = oracle::random_cube(3, 5, 4, 22);
        let want =
            HsiCube::from_matrix(&(r.to_dmatrix().transpose() * z.to_matrix()), 5, 4).unwrap();
        assert!(rel(&r.adjoint(&z).unwrap(), &want) < 1e-12);
    }

    #[test]
    fn srf_rejects_bad_input() {
        let mut m = vec![1.0; 8];
        m[4..].iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(
            SpectralResponse::new(2, 4, m),
            Err(HsError::InvalidSrf(_))
        ));
        assert!(SpectralResponse::new(2, 2, vec![1.0; 4]).is_err());
        assert!(SpectralResponse::new(1, 3, vec![1.0, -1.0, 1.0]).is_err());

        let r = SpectralResponse::default_rgb(31).unwrap();
        let x = HsiCube::new(30, 2, 2, 0.0).unwrap();
        assert!(matches!(r.apply(&x), Err(HsError::DimMismatch { .. })));
        assert!(matches!(r.adjoint(&x), Err(HsError::DimMismatch { .. })));
    }

    #[test]
    fn default_srf_rows_sum_to_one() {
        let r = SpectralResponse::default_rgb(31).unwrap();
        for row in r.matrix().chunks(31) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn model(h: usize, w: usize, bands: usize, block: usize, s: usize) -> DegradationModel {
        DegradationModel::new(
            BlurOperator::new(KernelSpec::UniformBlock(block), h, w).unwrap(),
            Downsampler::new(s).unwrap(),
            SpectralResponse::default_rgb(bands).unwrap(),
        )
    }

    #[test]
    fn degrade_constant_and_shapes() {
        let m = model(64, 64, 31, 32, 32);
        let (y, z) = m.degrade(&HsiCube::new(31, 64, 64, 0.4).unwrap()).unwrap();
        assert_eq!(y.dims(), Dims::new(31, 2, 2));
        assert_eq!(z.dims(), Dims::new(3, 64, 64));
        assert!(y.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
        assert!(z.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn degrade_full_geometry_shapes() {
        let m = model(512, 512, 31, 32, 32);
        let x = HsiCube::new(31, 512, 512, 0.5).unwrap();
        let (y, z) = m.degrade(&x).unwrap();
        assert_eq!(y.dims(), Dims::new(31, 16, 16));
        assert_eq!(z.dims(), Dims::new(3, 512, 512));
    }

    #[test]
    fn degrade_is_composition() {
        let m = model(8, 8, 4, 2, 2);
        let x = oracle::random_cube(4, 8, 8, 5);
        let (y, z) = m.degrade(&x).unwrap();
        assert_eq!(y, m.down.apply(&m.blur.apply(&x).unwrap()).unwrap());
        assert_eq!(z, m.srf.apply(&x).unwrap());
    }

    #[test]
    fn noise_is_seeded() {
        let m = model(8, 8, 4, 2, 2).with_noise(0.01, 3);
        let x = oracle::random_cube(4, 8, 8, 5);
        let (y1, z1) = m.degrade(&x).unwrap();
        let (y2, z2) = m.degrade(&x).unwrap();
        assert_eq!((y1.clone(), z1), (y2, z2));
        let (y0, _) = model(8, 8, 4, 2, 2).degrade(&x).unwrap();
        assert_ne!(y0, y1);
    }

    #[test]
    fn block_blur_then_downsample_is_block_mean() {
        let s = 4;
        let m = model(16, 12, 4, s, s);
        let x = oracle::random_cube(4, 16, 12, 8);
        let y = m.spatial(&x).unwrap();
        let want = oracle::block_mean(&x, s);
        assert!(y.sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn blur_commutes_with_srf() {
        let m = model(8, 8, 6, 3, 1);
        let srf =
            SpectralResponse::new(2, 6, (0..12).map(|i| (i % 5) as f64 + 0.5).collect()).unwrap();
        let x = oracle::random_cube(6, 8, 8, 12);
        let a = srf.apply(&m.blur.apply(&x).unwrap()).unwrap();
        let b = m.blur.apply(&srf.apply(&x).unwrap()).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-12);
    }
}
