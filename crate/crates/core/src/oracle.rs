//! Dense and brute-force reference implementations used to check the fast
//! operators and solvers. Everything here is built from explicit loops and
//! dense matrices, never from the FFT paths it is used to verify.
//!
//! Vectorization convention: a cube is stacked pixel by pixel, each pixel
//! contributing its `B` band values, i.e. `vec(X)` of the `B x N` matrix in
//! column-major order. Pixels are numbered row-major.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::Tap;
use crate::cube::{Dims, HsiCube};
use crate::degradation::{Boundary, DegradationModel};

pub fn random_cube(bands: usize, height: usize, width: usize, seed: u64) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    HsiCube::from_fn(bands, height, width, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

pub fn random_unit_cube(bands: usize, height: usize, width: usize, seed: u64) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    HsiCube::from_fn(bands, height, width, |_, _, _| rng.random_range(0.0..1.0)).unwrap()
}

pub fn impulse(bands: usize, height: usize, width: usize) -> HsiCube {
    HsiCube::from_fn(bands, height, width, |_, r, c| {
        if r == 0 && c == 0 {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

/// O(N^2) per-band 2D DFT.
pub fn direct_dft2(x: &HsiCube) -> Vec<Complex64> {
    let (h, w) = (x.height(), x.width());
    let mut out = Vec::with_capacity(x.dims().len());
    for band in x.bands_iter() {
        for kr in 0..h {
            for kc in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..h {
                    for c in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * (((kr * r) % h) as f64 / h as f64 + ((kc * c) % w) as f64 / w as f64);
                        acc += band[r * w + c] * Complex64::from_polar(1.0, ang);
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Spatial-domain circular convolution, O(N * taps).
pub fn circular_conv(x: &HsiCube, taps: &[Tap]) -> HsiCube {
    let (h, w) = (x.height() as isize, x.width() as isize);
    HsiCube::from_fn(x.bands(), x.height(), x.width(), |b, r, c| {
        taps.iter()
            .map(|t| {
                let rr = (r as isize - t.dr).rem_euclid(h) as usize;
                let cc = (c as isize - t.dc).rem_euclid(w) as usize;
                t.weight * x.get(b, rr, cc)
            })
            .sum()
    })
    .unwrap()
}

/// Mean over aligned non-overlapping `s x s` blocks.
pub fn block_mean(x: &HsiCube, s: usize) -> HsiCube {
    HsiCube::from_fn(x.bands(), x.height() / s, x.width() / s, |b, i, j| {
        let mut acc = 0.0;
        for r in 0..s {
            for c in 0..s {
                acc += x.get(b, s * i + r, s * j + c);
            }
        }
        acc / (s * s) as f64
    })
    .unwrap()
}

/// `N x N` matrix of a 2D convolution acting on a row-major image vector.
pub fn conv_matrix(taps: &[Tap], height: usize, width: usize, boundary: Boundary) -> DMatrix<f64> {
    let n = height * width;
    let (h, w) = (height as isize, width as isize);
    let mut m = DMatrix::zeros(n, n);
    for r in 0..h {
        for c in 0..w {
            for t in taps {
                let (mut rr, mut cc) = (r - t.dr, c - t.dc);
                match boundary {
                    Boundary::Periodic => {
                        rr = rr.rem_euclid(h);
                        cc = cc.rem_euclid(w);
                    }
                    Boundary::Zero => {
                        if rr < 0 || rr >= h || cc < 0 || cc >= w {
                            continue;
                        }
                    }
                }
                m[((r * w + c) as usize, (rr * w + cc) as usize)] += t.weight;
            }
        }
    }
    m
}

/// `n x N` selection matrix of a downsampler.
pub fn downsample_matrix(
    height: usize,
    width: usize,
    factor: usize,
    phase: (usize, usize),
) -> DMatrix<f64> {
    let (lh, lw) = (height / factor, width / factor);
    let mut m = DMatrix::zeros(lh * lw, height * width);
    for i in 0..lh {
        for j in 0..lw {
            m[(
                i * lw + j,
                (factor * i + phase.0) * width + factor * j + phase.1,
            )] = 1.0;
        }
    }
    m
}

/// The `n x N` matrix `G` of `x -> S(B(x))` for one band.
pub fn spatial_matrix(model: &DegradationModel) -> DMatrix<f64> {
    let (h, w) = (model.blur.height(), model.blur.width());
    let b = conv_matrix(model.blur.taps(), h, w, model.blur.boundary());
    downsample_matrix(h, w, model.down.factor(), model.down.phase()) * b
}

/// `(B-1) x B` first-difference matrix.
pub fn e0_matrix(bands: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(bands - 1, bands);
    for i in 0..bands - 1 {
        m[(i, i)] = -1.0;
        m[(i, i + 1)] = 1.0;
    }
    m
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut m = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let v = a[(i, j)];
            if v != 0.0 {
                m.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * v));
            }
        }
    }
    m
}

/// Pixel-major stacking (column-major `vec` of the `B x N` matrix).
pub fn vectorize(x: &HsiCube) -> DVector<f64> {
    let m = x.to_matrix();
    DVector::from_column_slice(m.as_slice())
}

pub fn devectorize(v: &DVector<f64>, dims: Dims) -> HsiCube {
    let m = DMatrix::from_column_slice(dims.bands, dims.pixels(), v.as_slice());
    HsiCube::from_matrix(&m, dims.height, dims.width).unwrap()
}

/// Spatial operator `M` (`N' x N`, acting on one band) lifted to all bands in
/// the pixel-major stacking: `M (x) I_B`.
pub fn lift_spatial(m: &DMatrix<f64>, bands: usize) -> DMatrix<f64> {
    kron(m, &DMatrix::identity(bands, bands))
}

/// Spectral operator `A` (`b x B`) lifted to all pixels: `I_N (x) A`.
pub fn lift_spectral(a: &DMatrix<f64>, pixels: usize) -> DMatrix<f64> {
    kron(&DMatrix::identity(pixels, pixels), a)
}

/// Dense `BN x BN` Sylvester system matrix `I_N (x) C1 + C2^T (x) I_B`.
pub fn sylvester_matrix(c1: &DMatrix<f64>, c2: &DMatrix<f64>) -> DMatrix<f64> {
    let (b, n) = (c1.nrows(), c2.nrows());
    kron(&DMatrix::identity(n, n), c1) + kron(&c2.transpose(), &DMatrix::identity(b, b))
}

/// Solve `C1 X + X C2 = C3` by forming the Kronecker system densely.
pub fn dense_sylvester_solve(c1: &DMatrix<f64>, c2: &DMatrix<f64>, c3: &HsiCube) -> HsiCube {
    let a = sylvester_matrix(c1, c2);
    let x = a.lu().solve(&vectorize(c3)).expect("singular dense system");
    devectorize(&x, c3.dims())
}

/// Explicit `C1 = R^T R + rho I` and `C2 = G^T G` for a model.
pub fn dense_sylvester_coefficients(
    model: &DegradationModel,
    rho: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let r = model.srf.to_dmatrix();
    let bands = r.ncols();
    let c1 = r.transpose() * &r + DMatrix::identity(bands, bands) * rho;
    let g = spatial_matrix(model);
    let c2 = g.transpose() * g;
    (c1, c2)
}

/// Dense `C3 = R^T Z + Y G + rho V` in matricized form.
pub fn dense_c3(
    model: &DegradationModel,
    y: &HsiCube,
    z: &HsiCube,
    v: &HsiCube,
    rho: f64,
) -> HsiCube {
    let r = model.srf.to_dmatrix();
    let g = spatial_matrix(model);
    let m = r.transpose() * z.to_matrix() + y.to_matrix() * g + v.to_matrix() * rho;
    HsiCube::from_matrix(&m, v.height(), v.width()).unwrap()
}

/// Dense matrices `D` (block-diagonal Laplacian) and `E = E0 (x) I_N` in the
/// pixel-major stacking.
pub fn dense_regularizers(dims: Dims, lap_taps: &[Tap]) -> (DMatrix<f64>, DMatrix<f64>) {
    let lap = conv_matrix(lap_taps, dims.height, dims.width, Boundary::Periodic);
    let d = lift_spatial(&lap, dims.bands);
    let e = lift_spectral(&e0_matrix(dims.bands), dims.pixels());
    (d, e)
}

/// Dense minimizer of `rho|x - v|^2 + mu|D(v - xt)|^2 + nu|E(v - xt)|^2`.
pub fn dense_vstep(
    x_next: &HsiCube,
    xt: &HsiCube,
    lap_taps: &[Tap],
    rho: f64,
    mu: f64,
    nu: f64,
) -> HsiCube {
    let dims = x_next.dims();
    let (d, e) = dense_regularizers(dims, lap_taps);
    let dtd = d.transpose() * &d;
    let ete = e.transpose() * &e;
    let n = dims.len();
    let a = DMatrix::identity(n, n) * rho + &dtd * mu + &ete * nu;
    let xt_v = vectorize(xt);
    let rhs = vectorize(x_next) * rho + (&dtd * &xt_v) * mu + (&ete * &xt_v) * nu;
    let v = a.lu().solve(&rhs).expect("singular v-step system");
    devectorize(&v, dims)
}

/// Dense evaluation of the augmented Lagrangian.
#[allow(clippy::too_many_arguments)]
pub fn dense_objective(
    x: &HsiCube,
    v: &HsiCube,
    y: &HsiCube,
    z: &HsiCube,
    model: &DegradationModel,
    xt: &HsiCube,
    lap_taps: &[Tap],
    rho: f64,
    mu: f64,
    nu: f64,
) -> f64 {
    let dims = x.dims();
    let g = lift_spatial(&spatial_matrix(model), dims.bands);
    let r = lift_spectral(&model.srf.to_dmatrix(), dims.pixels());
    let (d, e) = dense_regularizers(dims, lap_taps);
    let xv = vectorize(x);
    let vv = vectorize(v);
    let dv = &vv - vectorize(xt);
    (vectorize(y) - &g * &xv).norm_squared()
        + (vectorize(z) - &r * &xv).norm_squared()
        + rho * (&xv - &vv).norm_squared()
        + mu * (&d * &dv).norm_squared()
        + nu * (&e * &dv).norm_squared()
}
