//! Regularizer operators: the per-band spatial Laplacian `D` and the
//! spectral first difference `E = E0 (x) I_N`.

use num_complex::Complex64;

use crate::conv::{Circulant2d, Tap};
use crate::cube::{Dims, HsiCube};
use crate::error::{HsError, Result};
use crate::tridiag::TridiagMatrix;

/// The 5-point Laplacian stencil `[0 -1 0; -1 4 -1; 0 -1 0]`.
pub const LAPLACIAN_STENCIL: [f64; 9] = [0.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 0.0];

/// Taps of a centered 3x3 stencil given row-major.
pub fn stencil_taps(stencil: &[f64; 9]) -> Vec<Tap> {
    stencil
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(i, &weight)| Tap {
            dr: (i / 3) as isize - 1,
            dc: (i % 3) as isize - 1,
            weight,
        })
        .collect()
}

/// Spatial gradient operator `D`: one circulant 3x3 filter per band, or a
/// single filter shared by every band.
#[derive(Clone, Debug)]
pub struct SpatialGradOp {
    height: usize,
    width: usize,
    stencils: Vec<[f64; 9]>,
    filters: Vec<Circulant2d>,
}

impl SpatialGradOp {
    /// The Laplacian shared by all bands.
    pub fn laplacian(height: usize, width: usize) -> Result<Self> {
        Self::shared(LAPLACIAN_STENCIL, height, width)
    }

    pub fn shared(stencil: [f64; 9], height: usize, width: usize) -> Result<Self> {
        Self::per_band(vec![stencil], height, width)
    }

    /// One stencil per band (or a single shared stencil when `stencils` has
    /// length 1).
    pub fn per_band(stencils: Vec<[f64; 9]>, height: usize, width: usize) -> Result<Self> {
        if stencils.is_empty() {
            return Err(HsError::InvalidParameter("no stencils given".into()));
        }
        let filters = stencils
            .iter()
            .map(|s| Circulant2d::new(stencil_taps(s), height, width))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            height,
            width,
            stencils,
            filters,
        })
    }

    pub fn is_shared(&self) -> bool {
        self.filters.len() == 1
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn stencil(&self, band: usize) -> &[f64; 9] {
        &self.stencils[self.index(band)]
    }

    pub fn taps(&self, band: usize) -> &[Tap] {
        self.filters[self.index(band)].taps()
    }

    fn index(&self, band: usize) -> usize {
        if self.is_shared() {
            0
        } else {
            band
        }
    }

    /// Frequency response of the filter used on `band`.
    pub fn response(&self, band: usize) -> &[Complex64] {
        self.filters[self.index(band)].response()
    }

    /// `|response|^2` per frequency for `band`.
    pub fn power_response(&self, band: usize) -> Vec<f64> {
        self.response(band).iter().map(|v| v.norm_sqr()).collect()
    }

    /// Distinct power responses: one entry when shared, else one per band.
    pub(crate) fn power_responses(&self) -> Vec<Vec<f64>> {
        (0..self.filters.len())
            .map(|i| {
                self.filters[i]
                    .response()
                    .iter()
                    .map(|v| v.norm_sqr())
                    .collect()
            })
            .collect()
    }

    fn check(&self, x: &HsiCube) -> Result<()> {
        if x.height() != self.height || x.width() != self.width {
            return Err(HsError::mismatch(
                format!("{}x{} image", self.height, self.width),
                format!("{}x{}", x.height(), x.width()),
            ));
        }
        if !self.is_shared() && x.bands() != self.filters.len() {
            return Err(HsError::mismatch(
                format!("{} bands", self.filters.len()),
                x.bands(),
            ));
        }
        Ok(())
    }

    /// `laplacian_apply`: per-band circular convolution.
    pub fn apply(&self, x: &HsiCube) -> Result<HsiCube> {
        self.filter(x, false)
    }

    pub fn adjoint(&self, x: &HsiCube) -> Result<HsiCube> {
        self.filter(x, true)
    }

    fn filter(&self, x: &HsiCube, adjoint: bool) -> Result<HsiCube> {
        self.check(x)?;
        if self.is_shared() {
            let f = &self.filters[0];
            return if adjoint { f.adjoint(x) } else { f.apply(x) };
        }
        let mut out = Vec::with_capacity(x.dims().len());
        for (b, f) in self.filters.iter().enumerate() {
            let band = HsiCube::from_vec(1, x.height(), x.width(), x.band(b).to_vec())?;
            let y = if adjoint {
                f.adjoint(&band)?
            } else {
                f.apply(&band)?
            };
            out.extend_from_slice(y.data());
        }
        Ok(HsiCube::from_parts(x.dims(), out))
    }
}

/// `spectral_diff_apply`: band `l` of the output is `x[l+1] - x[l]`.
pub fn spectral_diff_apply(x: &HsiCube) -> Result<HsiCube> {
    let bands = x.bands();
    if bands < 2 {
        return Err(HsError::Dimension(format!(
            "spectral difference needs >= 2 bands, got {bands}"
        )));
    }
    let mut out = Vec::with_capacity((bands - 1) * x.pixels());
    for l in 0..bands - 1 {
        out.extend(x.band(l + 1).iter().zip(x.band(l)).map(|(a, b)| a - b));
    }
    Ok(HsiCube::from_parts(
        Dims::new(bands - 1, x.height(), x.width()),
        out,
    ))
}

/// Adjoint of [`spectral_diff_apply`]: maps `B-1` bands back to `B`.
pub fn spectral_diff_adjoint(d: &HsiCube) -> Result<HsiCube> {
    let bands = d.bands() + 1;
    let n = d.pixels();
    let mut out = vec![0.0; bands * n];
    for l in 0..bands - 1 {
        for (p, v) in d.band(l).iter().enumerate() {
            out[l * n + p] -= v;
            out[(l + 1) * n + p] += v;
        }
    }
    Ok(HsiCube::from_parts(
        Dims::new(bands, d.height(), d.width()),
        out,
    ))
}

/// `E0^T E0`: diagonal `(1, 2, ..., 2, 1)`, off-diagonals `-1`.
pub fn spectral_gram_tridiag(bands: usize) -> Result<TridiagMatrix> {
    if bands < 2 {
        return Err(HsError::Dimension(format!(
            "spectral difference needs >= 2 bands, got {bands}"
        )));
    }
    let mut diag = vec![2.0; bands];
    diag[0] = 1.0;
    diag[bands - 1] = 1.0;
    Ok(TridiagMatrix::new(
        vec![-1.0; bands - 1],
        diag,
        vec![-1.0; bands - 1],
    ))
}

/// `mu |D(x - xt)|^2 + nu |E(x - xt)|^2`.
pub fn regularizer_value(
    x: &HsiCube,
    xt: &HsiCube,
    lap: &SpatialGradOp,
    mu: f64,
    nu: f64,
) -> Result<f64> {
    if !(mu >= 0.0 && nu >= 0.0) {
        return Err(HsError::InvalidParameter(format!(
            "regularizer weights must be >= 0, got mu={mu}, nu={nu}"
        )));
    }
    let diff = x.sub(xt)?;
    let spatial = if mu > 0.0 {
        lap.apply(&diff)?.norm_sq()
    } else {
        0.0
    };
    let spectral = if nu > 0.0 && diff.bands() >= 2 {
        spectral_diff_apply(&diff)?.norm_sq()
    } else {
        0.0
    };
    Ok(mu * spatial + nu * spectral)
}
