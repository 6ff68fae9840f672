//! Prior cubes for the regularizer.

use std::path::PathBuf;

use nalgebra::DMatrix;

use crate::cube::HsiCube;
use crate::degradation::DegradationModel;
use crate::error::{HsError, Result};
use crate::io::load_cube;

#[derive(Clone, Debug)]
pub enum PriorSource {
    /// A precomputed estimate stored in the cube container.
    ExternalFile(PathBuf),
    /// Bilinear upsampling of `Y` followed by a spectral back-projection onto `Z`.
    NaiveFusion,
    /// Hands back the supplied reference. Test harnesses only.
    GroundTruthOracle(HsiCube),
}

pub fn make_prior(
    src: &PriorSource,
    y: &HsiCube,
    z: &HsiCube,
    model: &DegradationModel,
) -> Result<HsiCube> {
    let hr = model.hr_dims();
    let prior = match src {
        PriorSource::ExternalFile(path) => load_cube(path)?,
        PriorSource::NaiveFusion => naive_fusion(y, z, model)?,
        PriorSource::GroundTruthOracle(x) => x.clone(),
    };
    prior.check_dims(hr)?;
    Ok(prior)
}

/// `u = bilinear(y)`, then `x_p = u_p + R^T (R R^T)^-1 (z_p - R u_p)` per pixel.
pub fn naive_fusion(y: &HsiCube, z: &HsiCube, model: &DegradationModel) -> Result<HsiCube> {
    y.check_dims(model.lr_dims()?)?;
    z.check_dims(model.rgb_dims())?;
    let up = bilinear_upsample(
        y,
        model.down.factor(),
        model.blur.height(),
        model.blur.width(),
    )?;
    let r = model.srf.to_dmatrix();
    let gram_inv = (&r * r.transpose())
        .try_inverse()
        .ok_or_else(|| HsError::InvalidSrf("R R^T is singular".into()))?;
    let proj = r.transpose() * gram_inv;

    let ru = model.srf.apply(&up)?;
    let resid = z.sub(&ru)?;
    let bands = y.bands();
    let n = up.pixels();
    let resid_m = DMatrix::from_row_slice(resid.bands(), n, resid.data());
    let corr = &proj * resid_m;
    let mut out = up.into_vec();
    for b in 0..bands {
        for (p, v) in out[b * n..(b + 1) * n].iter_mut().enumerate() {
            *v += corr[(b, p)];
        }
    }
    HsiCube::from_vec(bands, model.blur.height(), model.blur.width(), out)
}

/// Bilinear interpolation with low-resolution sample `i` placed at
/// high-resolution coordinate `s*i + (s-1)/2`; edges are clamped.
pub fn bilinear_upsample(
    y: &HsiCube,
    factor: usize,
    height: usize,
    width: usize,
) -> Result<HsiCube> {
    if y.height() * factor != height || y.width() * factor != width {
        return Err(HsError::Dimension(format!(
            "{}x{} upsampled by {factor} is not {height}x{width}",
            y.height(),
            y.width()
        )));
    }
    let s = factor as f64;
    let axis = |len_lr: usize, len_hr: usize| -> Vec<(usize, usize, f64)> {
        (0..len_hr)
            .map(|i| {
                let t = ((i as f64 - (s - 1.0) / 2.0) / s).clamp(0.0, (len_lr - 1) as f64);
                let i0 = t.floor() as usize;
                let i1 = (i0 + 1).min(len_lr - 1);
                (i0, i1, t - i0 as f64)
            })
            .collect()
    };
    let rows = axis(y.height(), height);
    let cols = axis(y.width(), width);
    let lw = y.width();
    HsiCube::from_fn(y.bands(), height, width, |b, r, c| {
        let band = y.band(b);
        let (r0, r1, fr) = rows[r];
        let (c0, c1, fc) = cols[c];
        let top = band[r0 * lw + c0] * (1.0 - fc) + band[r0 * lw + c1] * fc;
        let bot = band[r1 * lw + c0] * (1.0 - fc) + band[r1 * lw + c1] * fc;
        top * (1.0 - fr) + bot * fr
    })
}
