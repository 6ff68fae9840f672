//! Reconstruction quality metrics.
//!
//! RMSE is reported on the 8-bit scale (values in `[0, 1]` times 255), PSNR
//! uses a peak of 1 and is capped at [`PSNR_CAP`] dB, SAM is in degrees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::HsiCube;
use crate::error::{HsError, Result};

pub const PSNR_CAP: f64 = 99.0;
pub const CSV_HEADER: &str = "rmse,psnr,ergas,sam,ssim";

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const ERGAS_MIN_MEAN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub psnr: f64,
    pub ergas: f64,
    pub sam: f64,
    pub ssim: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrMode {
    /// Mean of the per-band PSNRs.
    #[default]
    BandMean,
    /// PSNR of the MSE over the whole cube.
    Global,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }

    /// One CSV data row in [`CSV_HEADER`] order.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.rmse, self.psnr, self.ergas, self.sam, self.ssim
        )
    }
}

pub fn evaluate(x_hat: &HsiCube, x_ref: &HsiCube, factor: usize) -> Result<MetricReport> {
    evaluate_with(x_hat, x_ref, factor, PsnrMode::BandMean)
}

pub fn evaluate_with(
    x_hat: &HsiCube,
    x_ref: &HsiCube,
    factor: usize,
    mode: PsnrMode,
) -> Result<MetricReport> {
    x_hat.check_same(x_ref)?;
    if factor == 0 {
        return Err(HsError::InvalidParameter("factor must be >= 1".into()));
    }
    let psnr = match mode {
        PsnrMode::BandMean => {
            let per_band = band_psnr(x_hat, x_ref)?;
            per_band.iter().sum::<f64>() / per_band.len() as f64
        }
        PsnrMode::Global => psnr_from_mse(mse(x_hat.data(), x_ref.data())),
    };
    Ok(MetricReport {
        rmse: rmse(x_hat, x_ref)?,
        psnr,
        ergas: ergas(x_hat, x_ref, factor)?,
        sam: sam(x_hat, x_ref)?,
        ssim: ssim(x_hat, x_ref)?,
    })
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// `255 * sqrt(mean((x_hat - x)^2))`.
pub fn rmse(x_hat: &HsiCube, x_ref: &HsiCube) -> Result<f64> {
    x_hat.check_same(x_ref)?;
    Ok(255.0 * mse(x_hat.data(), x_ref.data()).sqrt())
}

pub fn band_psnr(x_hat: &HsiCube, x_ref: &HsiCube) -> Result<Vec<f64>> {
    x_hat.check_same(x_ref)?;
    Ok((0..x_ref.bands())
        .into_par_iter()
        .map(|b| psnr_from_mse(mse(x_hat.band(b), x_ref.band(b))))
        .collect())
}

/// Mean spectral angle in degrees; pixels where either spectrum is zero are
/// skipped.
pub fn sam(x_hat: &HsiCube, x_ref: &HsiCube) -> Result<f64> {
    x_hat.check_same(x_ref)?;
    let (bands, n) = (x_ref.bands(), x_ref.pixels());
    let (a, b) = (x_hat.data(), x_ref.data());
    let (sum, count) = (0..n)
        .into_par_iter()
        .map(|p| {
            let (mut na, mut nb) = (0.0, 0.0);
            for k in 0..bands {
                na += a[k * n + p] * a[k * n + p];
                nb += b[k * n + p] * b[k * n + p];
            }
            if na == 0.0 || nb == 0.0 {
                return (0.0, 0usize);
            }
            let (na, nb) = (na.sqrt(), nb.sqrt());
            let (mut diff, mut plus) = (0.0, 0.0);
            for k in 0..bands {
                let (u, v) = (a[k * n + p] / na, b[k * n + p] / nb);
                diff += (u - v) * (u - v);
                plus += (u + v) * (u + v);
            }
            (2.0 * diff.sqrt().atan2(plus.sqrt()), 1)
        })
        .reduce(|| (0.0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    if count == 0 {
        return Ok(0.0);
    }
    Ok((sum / count as f64).to_degrees())
}

/// `(100 / s) * sqrt(mean_b (rmse_b / mean_b)^2)` over bands whose reference
/// mean is at least `1e-6`.
pub fn ergas(x_hat: &HsiCube, x_ref: &HsiCube, factor: usize) -> Result<f64> {
    x_hat.check_same(x_ref)?;
    if factor == 0 {
        return Err(HsError::InvalidParameter("factor must be >= 1".into()));
    }
    let n = x_ref.pixels() as f64;
    let mut acc = 0.0;
    let mut used = 0usize;
    for b in 0..x_ref.bands() {
        let mean = x_ref.band(b).iter().sum::<f64>() / n;
        if mean.abs() < ERGAS_MIN_MEAN {
            log::warn!("ERGAS: skipping band {b} with reference mean {mean:e}");
            continue;
        }
        acc += mse(x_hat.band(b), x_ref.band(b)) / (mean * mean);
        used += 1;
    }
    if used == 0 {
        return Ok(0.0);
    }
    Ok(100.0 / factor as f64 * (acc / used as f64).sqrt())
}

/// Mean per-band SSIM with an 11x11 Gaussian window (sigma 1.5) over valid
/// positions, dynamic range 1. Images smaller than the window use a window
/// cropped to the image.
pub fn ssim(x_hat: &HsiCube, x_ref: &HsiCube) -> Result<f64> {
    x_hat.check_same(x_ref)?;
    let (h, w) = (x_ref.height(), x_ref.width());
    let total: f64 = (0..x_ref.bands())
        .into_par_iter()
        .map(|b| ssim_band(x_hat.band(b), x_ref.band(b), h, w))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total / x_ref.bands() as f64)
}

fn window(len: usize) -> Vec<f64> {
    let half = (len as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of a row-major `h x w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, gr: &[f64], gc: &[f64]) -> Vec<f64> {
    let (oh, ow) = (h - gr.len() + 1, w - gc.len() + 1);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = gc
                .iter()
                .enumerate()
                .map(|(k, g)| g * img[r * w + c + k])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = gr
                .iter()
                .enumerate()
                .map(|(k, g)| g * tmp[(r + k) * ow + c])
                .sum();
        }
    }
    out
}

fn ssim_band(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let gr = window(SSIM_WINDOW.min(h));
    let gc = window(SSIM_WINDOW.min(w));
    let f = |img: &[f64]| filter_valid(img, h, w, &gr, &gc);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let (mu_a, mu_b) = (f(a), f(b));
    let (aa, bb, ab) = (f(&prod(a, a)), f(&prod(b, b)), f(&prod(a, b)));
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        sum +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    sum / mu_a.len() as f64
}
