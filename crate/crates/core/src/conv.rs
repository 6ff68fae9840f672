//! Circulant (periodic-boundary) 2D convolution operators.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{Dims, HsiCube};
use crate::error::{HsError, Result};
use crate::fft::Fft2;

/// One kernel coefficient at a signed offset from the kernel origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub dr: isize,
    pub dc: isize,
    pub weight: f64,
}

/// Convolution `y(i,j) = sum_taps weight * x(i - dr, j - dc)` with periodic
/// wrap-around, applied in the Fourier domain.
#[derive(Clone, Debug)]
pub struct Circulant2d {
    height: usize,
    width: usize,
    taps: Vec<Tap>,
    response: Vec<Complex64>,
    plan: Fft2,
}

impl Circulant2d {
    pub fn new(taps: Vec<Tap>, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(HsError::Dimension(format!(
                "operator grid must be non-empty, got {height}x{width}"
            )));
        }
        if let Some(t) = taps.iter().find(|t| !t.weight.is_finite()) {
            return Err(HsError::InvalidParameter(format!(
                "non-finite kernel weight at offset ({}, {})",
                t.dr, t.dc
            )));
        }
        let plan = Fft2::new(height, width);
        let mut response = vec![Complex64::new(0.0, 0.0); height * width];
        for t in &taps {
            let r = t.dr.rem_euclid(height as isize) as usize;
            let c = t.dc.rem_euclid(width as isize) as usize;
            response[r * width + c] += t.weight;
        }
        plan.forward(&mut response);
        Ok(Self {
            height,
            width,
            taps,
            response,
            plan,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    /// Eigenvalues of the circulant operator, row-major over frequencies.
    pub fn response(&self) -> &[Complex64] {
        &self.response
    }

    pub(crate) fn plan(&self) -> &Fft2 {
        &self.plan
    }

    fn check(&self, x: &HsiCube) -> Result<()> {
        if x.height() != self.height || x.width() != self.width {
            return Err(HsError::mismatch(
                format!("{}x{} image", self.height, self.width),
                format!("{}x{}", x.height(), x.width()),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, x: &HsiCube) -> Result<HsiCube> {
        self.check(x)?;
        Ok(self.filter(x, false))
    }

    pub fn adjoint(&self, x: &HsiCube) -> Result<HsiCube> {
        self.check(x)?;
        Ok(self.filter(x, true))
    }

    fn filter(&self, x: &HsiCube, conjugate: bool) -> HsiCube {
        let n = x.pixels();
        let mut out = vec![0.0; x.dims().len()];
        out.par_chunks_mut(n)
            .zip(x.data().par_chunks(n))
            .for_each(|(dst, src)| {
                let mut buf: Vec<Complex64> = src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                self.plan.forward(&mut buf);
                for (b, h) in buf.iter_mut().zip(&self.response) {
                    *b *= if conjugate { h.conj() } else { *h };
                }
                self.plan.inverse(&mut buf);
                for (d, b) in dst.iter_mut().zip(&buf) {
                    *d = b.re;
                }
            });
        HsiCube::from_parts(x.dims(), out)
    }
}

/// Direct spatial convolution with zero (not periodic) boundaries.
pub(crate) fn zero_boundary_apply(taps: &[Tap], x: &HsiCube, adjoint: bool) -> HsiCube {
    let Dims { height, width, .. } = x.dims();
    let n = height * width;
    let (h, w) = (height as isize, width as isize);
    let mut out = vec![0.0; x.dims().len()];
    out.par_chunks_mut(n)
        .zip(x.data().par_chunks(n))
        .for_each(|(dst, src)| {
            for t in taps {
                // forward reads x(i - dr, j - dc); the adjoint reads y(i + dr, j + dc)
                let (sr, sc) = if adjoint {
                    (t.dr, t.dc)
                } else {
                    (-t.dr, -t.dc)
                };
                for i in 0..h {
                    let ii = i + sr;
                    if ii < 0 || ii >= h {
                        continue;
                    }
                    for j in 0..w {
                        let jj = j + sc;
                        if jj < 0 || jj >= w {
                            continue;
                        }
                        dst[(i * w + j) as usize] += t.weight * src[(ii * w + jj) as usize];
                    }
                }
            }
        });
    HsiCube::from_parts(x.dims(), out)
}
