//! Synthetic low-rank scenes built from a linear mixing model.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cube::HsiCube;
use crate::error::{HsError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub endmembers: usize,
    /// Standard deviation, in pixels, of the Gaussian that correlates the
    /// abundance fields.
    pub smoothness: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(bands: usize, height: usize, width: usize, endmembers: usize, seed: u64) -> Self {
        Self {
            bands,
            height,
            width,
            endmembers,
            smoothness: 2.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 {
            return Err(HsError::InvalidParameter(
                "scene needs at least one band".into(),
            ));
        }
        if self.height < 4 || self.width < 4 {
            return Err(HsError::InvalidParameter(format!(
                "scene must be at least 4x4, got {}x{}",
                self.height, self.width
            )));
        }
        if self.endmembers == 0 || self.endmembers > self.bands {
            return Err(HsError::InvalidParameter(format!(
                "endmembers must be in 1..={}, got {}",
                self.bands, self.endmembers
            )));
        }
        if !(self.smoothness >= 0.0 && self.smoothness.is_finite()) {
            return Err(HsError::InvalidParameter(format!(
                "smoothness must be >= 0, got {}",
                self.smoothness
            )));
        }
        Ok(())
    }
}

/// A generated scene together with its factors: `cube = scale * E A`.
#[derive(Clone, Debug)]
pub struct Scene {
    pub cube: HsiCube,
    /// `bands x p`, each column peaking at 1.
    pub endmembers: DMatrix<f64>,
    /// `p x pixels`, non-negative with column sums below 1.
    pub abundances: DMatrix<f64>,
    pub scale: f64,
}

pub fn generate_scene(spec: &SceneSpec) -> Result<HsiCube> {
    Ok(generate_scene_parts(spec)?.cube)
}

pub fn generate_scene_parts(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (b, p, n) = (spec.bands, spec.endmembers, spec.height * spec.width);

    let spectral_sigma = (b as f64 / 15.0).max(1.0);
    let mut endmembers = DMatrix::zeros(b, p);
    for j in 0..p {
        let noise: Vec<f64> = (0..b).map(|_| rng.random::<f64>().powi(3)).collect();
        let smooth = smooth_1d(&noise, spectral_sigma);
        let mut acc = 0.0;
        let curve: Vec<f64> = smooth
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        let peak = curve.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        for (i, v) in curve.iter().enumerate() {
            endmembers[(i, j)] = v / peak;
        }
    }

    let mut fields = Vec::with_capacity(p);
    for _ in 0..p {
        let white: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut f = gaussian_blur_periodic(&white, spec.height, spec.width, spec.smoothness);
        standardize(&mut f);
        fields.push(f);
    }
    let abundances = simplex_map(&fields, n);

    let raw = &endmembers * &abundances;
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(HsError::Numerical(
            "generated scene is identically zero".into(),
        ));
    }
    let scale = 1.0 / peak;
    let cube = HsiCube::from_matrix(&(raw / peak), spec.height, spec.width)?;
    Ok(Scene {
        cube,
        endmembers,
        abundances,
        scale,
    })
}

/// Softmax over the fields plus an implicit zero logit, so every column is
/// positive and sums to less than one.
fn simplex_map(fields: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    const TEMPERATURE: f64 = 2.0;
    let p = fields.len();
    let mut a = DMatrix::zeros(p, n);
    for px in 0..n {
        let m = fields
            .iter()
            .map(|f| TEMPERATURE * f[px])
            .fold(0.0, f64::max);
        let mut denom = (-m).exp();
        for (j, f) in fields.iter().enumerate() {
            let e = (TEMPERATURE * f[px] - m).exp();
            a[(j, px)] = e;
            denom += e;
        }
        for j in 0..p {
            a[(j, px)] /= denom;
        }
    }
    a
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
}

fn gaussian_weights(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Gaussian smoothing of a 1-D signal with clamped edges.
fn smooth_1d(x: &[f64], sigma: f64) -> Vec<f64> {
    let w = gaussian_weights(sigma);
    let r = (w.len() / 2) as isize;
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            w.iter()
                .enumerate()
                .map(|(k, wk)| wk * x[(i + k as isize - r).clamp(0, n - 1) as usize])
                .sum()
        })
        .collect()
}

/// Separable Gaussian blur with periodic wrap on a row-major `h x w` grid.
pub(crate) fn gaussian_blur_periodic(x: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return x.to_vec();
    }
    let k = gaussian_weights(sigma);
    let r = (k.len() / 2) as isize;
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            tmp[row * w + col] = k
                .iter()
                .enumerate()
                .map(|(j, kj)| kj * x[row * w + wrap(col as isize + j as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            out[row * w + col] = k
                .iter()
                .enumerate()
                .map(|(j, kj)| kj * tmp[wrap(row as isize + j as isize - r, h) * w + col])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_in_unit_interval_and_peak_one() {
        let x = generate_scene(&SceneSpec::new(31, 32, 32, 5, 3)).unwrap();
        assert!(x.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(x.max_abs(), 1.0);
    }

    #[test]
    fn single_endmember_is_rank_one() {
        let s = generate_scene_parts(&SceneSpec::new(12, 16, 16, 1, 4)).unwrap();
        let m = s.cube.to_matrix();
        let sv = m.singular_values();
        assert!(sv[1] / sv[0] < 1e-12);
        // every pixel is a multiple of the single curve
        let e = s.endmembers.column(0);
        for p in [0, 17, 255] {
            let ratio = m[(5, p)] / e[5];
            for b in 0..12 {
                assert!((m[(b, p)] - ratio * e[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_cube() {
        let spec = SceneSpec::new(8, 16, 16, 3, 99);
        assert_eq!(
            generate_scene(&spec).unwrap(),
            generate_scene(&spec).unwrap()
        );
        let other = SceneSpec {
            seed: 100,
            ..spec.clone()
        };
        assert_ne!(
            generate_scene(&spec).unwrap(),
            generate_scene(&other).unwrap()
        );
    }

    #[test]
    fn singular_values_vanish_beyond_endmember_count() {
        let x = generate_scene(&SceneSpec::new(31, 64, 64, 5, 7)).unwrap();
        let sv = x.to_matrix().singular_values();
        let mut sv: Vec<f64> = sv.iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[4] / sv[0] > 1e-6);
        assert!(sv[5] / sv[0] <= 1e-10, "{}", sv[5] / sv[0]);
    }

    #[test]
    fn abundances_on_simplex() {
        let s = generate_scene_parts(&SceneSpec::new(10, 16, 16, 4, 1)).unwrap();
        for col in s.abundances.column_iter() {
            assert!(col.iter().all(|&a| a > 0.0));
            assert!(col.sum() < 1.0);
        }
        let back = &s.endmembers * &s.abundances * s.scale;
        assert!((back - s.cube.to_matrix()).abs().max() < 1e-14);
    }

    #[test]
    fn smoother_fields_have_weaker_laplacian() {
        let mut last = f64::INFINITY;
        for smoothness in [1.0, 2.0, 4.0] {
            let spec = SceneSpec {
                smoothness,
                ..SceneSpec::new(8, 64, 64, 3, 5)
            };
            let s = generate_scene_parts(&spec).unwrap();
            let (h, w) = (64usize, 64usize);
            let mut total = 0.0;
            for row in s.abundances.row_iter() {
                let a: Vec<f64> = row.iter().cloned().collect();
                for r in 0..h {
                    for c in 0..w {
                        let at = |dr: isize, dc: isize| {
                            a[(r as isize + dr).rem_euclid(h as isize) as usize * w
                                + (c as isize + dc).rem_euclid(w as isize) as usize]
                        };
                        total +=
                            (4.0 * at(0, 0) - at(-1, 0) - at(1, 0) - at(0, -1) - at(0, 1)).abs();
                    }
                }
            }
            let mean = total / (3 * h * w) as f64;
            assert!(mean < last, "{mean} !< {last}");
            last = mean;
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_scene(&SceneSpec::new(31, 64, 64, 40, 0)).is_err());
        assert!(generate_scene(&SceneSpec::new(31, 3, 64, 2, 0)).is_err());
        assert!(generate_scene(&SceneSpec::new(31, 8, 8, 0, 0)).is_err());
        let neg = SceneSpec {
            smoothness: -1.0,
            ..SceneSpec::new(4, 8, 8, 2, 0)
        };
        assert!(generate_scene(&neg).is_err());
    }

    #[test]
    fn blur_preserves_mean_and_constants() {
        let x: Vec<f64> = (0..48).map(|i| (i * 7 % 11) as f64).collect();
        let y = gaussian_blur_periodic(&x, 6, 8, 1.5);
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        assert!((sx - sy).abs() < 1e-10);
        let c = gaussian_blur_periodic(&[2.0; 48], 6, 8, 2.0);
        assert!(c.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }
}
