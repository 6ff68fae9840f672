//! 2D DFT over row-major `height x width` grids.
//!
//! Forward transforms are unnormalized; inverse transforms carry the
//! `1/(height*width)` factor, so `inverse(forward(x)) == x`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-place unnormalized forward transform of one plane.
    pub fn forward(&self, plane: &mut [Complex64]) {
        self.run(plane, &self.row_fwd, &self.col_fwd);
    }

    /// In-place inverse transform of one plane, scaled by `1/(height*width)`.
    pub fn inverse(&self, plane: &mut [Complex64]) {
        self.run(plane, &self.row_inv, &self.col_inv);
        let scale = 1.0 / self.len() as f64;
        for v in plane.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&self, plane: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(plane.len(), self.len(), "plane size does not match plan");
        let (h, w) = (self.height, self.width);
        if w > 1 {
            rows.process(plane);
        }
        if h > 1 {
            let mut t = vec![Complex64::new(0.0, 0.0); h * w];
            transpose(plane, &mut t, h, w);
            cols.process(&mut t);
            transpose(&t, plane, w, h);
        }
    }
}

/// Transpose a row-major `rows x cols` matrix into `dst` (`cols x rows`).
pub(crate) fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    const TILE: usize = 16;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}
