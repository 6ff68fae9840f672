//! V-step of the splitting: minimize
//! `rho |X - V|^2 + mu |D(V - Xt)|^2 + nu |E(V - Xt)|^2` over `V`.
//!
//! In the per-band 2D Fourier domain the problem separates over spatial
//! frequencies `f`. With `mu' = mu/rho`, `nu' = nu/rho`, each frequency needs
//! one real tridiagonal `B x B` solve
//!
//! ```text
//! T_f v_f = x_f + mu' |Delta(f)|^2 xt_f + nu' E0^T E0 xt_f
//! T_f     = I + mu' |Delta(f)|^2 + nu' E0^T E0
//! ```
//!
//! where `Delta(f)` is the Laplacian response (real for the symmetric
//! stencil; `|Delta|^2` is used so asymmetric stencils work too).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cube::{dft2_with, idft2_with, FreqCube, HsiCube};
use crate::error::{HsError, Result};
use crate::fft::{transpose, Fft2};
use crate::gradient::{
    spectral_diff_adjoint, spectral_diff_apply, spectral_gram_tridiag, SpatialGradOp,
};
use crate::tridiag::TridiagMatrix;

/// Per-frequency data of one V-step.
#[derive(Clone, Debug)]
pub struct VStepSystem {
    pub x_next: FreqCube,
    pub xt: FreqCube,
    /// `|Delta(f)|^2` per frequency: one grid shared by all bands, or one
    /// grid per band.
    pub lap_power: Vec<Vec<f64>>,
    /// `E0^T E0`.
    pub tridiag: TridiagMatrix,
    pub mu_p: f64,
    pub nu_p: f64,
}

impl VStepSystem {
    pub fn new(
        x_next: &HsiCube,
        xt: &HsiCube,
        lap: &SpatialGradOp,
        mu_p: f64,
        nu_p: f64,
    ) -> Result<Self> {
        x_next.check_same(xt)?;
        if x_next.height() != lap.height() || x_next.width() != lap.width() {
            return Err(HsError::mismatch(
                format!("{}x{} image", lap.height(), lap.width()),
                format!("{}x{}", x_next.height(), x_next.width()),
            ));
        }
        if !(mu_p >= 0.0 && nu_p >= 0.0 && mu_p.is_finite() && nu_p.is_finite()) {
            return Err(HsError::InvalidParameter(format!(
                "scaled weights must be finite and >= 0, got mu'={mu_p}, nu'={nu_p}"
            )));
        }
        let lap_power = lap.power_responses();
        if lap_power.len() != 1 && lap_power.len() != x_next.bands() {
            return Err(HsError::mismatch(
                format!("{} bands", lap_power.len()),
                x_next.bands(),
            ));
        }
        let plan = Fft2::new(x_next.height(), x_next.width());
        Ok(Self {
            x_next: dft2_with(&plan, x_next),
            xt: dft2_with(&plan, xt),
            lap_power,
            tridiag: spectral_gram(x_next.bands()),
            mu_p,
            nu_p,
        })
    }

    pub fn bands(&self) -> usize {
        self.x_next.dims().bands
    }

    pub fn frequencies(&self) -> usize {
        self.x_next.dims().pixels()
    }

    fn power(&self, band: usize, f: usize) -> f64 {
        if self.lap_power.len() == 1 {
            self.lap_power[0][f]
        } else {
            self.lap_power[band][f]
        }
    }

    /// `T_f` for frequency index `f` (row-major over the grid).
    pub fn tf(&self, f: usize) -> TridiagMatrix {
        let power: Vec<f64> = (0..self.bands()).map(|b| self.power(b, f)).collect();
        assemble_tf_banded(&power, &self.tridiag, self.mu_p, self.nu_p)
    }

    /// Right-hand side of the frequency-`f` system.
    pub fn rhs(&self, f: usize) -> Vec<Complex64> {
        let n = self.frequencies();
        let bands = self.bands();
        let xt: Vec<Complex64> = (0..bands).map(|b| self.xt.data()[b * n + f]).collect();
        let gram_xt = self.tridiag.mul_complex(&xt);
        (0..bands)
            .map(|b| {
                self.x_next.data()[b * n + f]
                    + xt[b] * (self.mu_p * self.power(b, f))
                    + gram_xt[b] * self.nu_p
            })
            .collect()
    }

    fn solve_pixel_major(
        &self,
        f: usize,
        x: &[Complex64],
        xt: &[Complex64],
        out: &mut [Complex64],
    ) {
        let bands = x.len();
        let gram_xt = self.tridiag.mul_complex(xt);
        let mut power = Vec::with_capacity(bands);
        for b in 0..bands {
            let p = self.power(b, f);
            power.push(p);
            out[b] = x[b] + xt[b] * (self.mu_p * p) + gram_xt[b] * self.nu_p;
        }
        assemble_tf_banded(&power, &self.tridiag, self.mu_p, self.nu_p)
            .factor()
            .solve_in_place(out);
    }
}

fn spectral_gram(bands: usize) -> TridiagMatrix {
    if bands >= 2 {
        spectral_gram_tridiag(bands).expect("bands >= 2")
    } else {
        TridiagMatrix::new(vec![], vec![0.0], vec![])
    }
}

/// `assemble_tf`: `I + mu' lap_value^2 + nu' E0^T E0` with one Laplacian value
/// shared by all bands.
pub fn assemble_tf(lap_value: f64, tridiag: &TridiagMatrix, mu_p: f64, nu_p: f64) -> TridiagMatrix {
    let power = vec![lap_value * lap_value; tridiag.len()];
    assemble_tf_banded(&power, tridiag, mu_p, nu_p)
}

/// `T_f` with per-band `|Delta_l(f)|^2` on the diagonal.
pub fn assemble_tf_banded(
    power: &[f64],
    tridiag: &TridiagMatrix,
    mu_p: f64,
    nu_p: f64,
) -> TridiagMatrix {
    let diag = tridiag
        .diag
        .iter()
        .zip(power)
        .map(|(g, p)| 1.0 + mu_p * p + nu_p * g)
        .collect();
    TridiagMatrix::new(
        tridiag.lower.iter().map(|v| nu_p * v).collect(),
        diag,
        tridiag.upper.iter().map(|v| nu_p * v).collect(),
    )
}

/// `solve_frequency`: the spectral vector `v_f` for frequency index `f`.
pub fn solve_frequency(sys: &VStepSystem, f: usize) -> Result<Vec<Complex64>> {
    if f >= sys.frequencies() {
        return Err(HsError::InvalidParameter(format!(
            "frequency index {f} outside grid of {}",
            sys.frequencies()
        )));
    }
    let mut v = sys.rhs(f);
    sys.tf(f).factor().solve_in_place(&mut v);
    Ok(v)
}

/// `vstep`: closed-form V update given `X_{k+1}` and the prior `Xt`.
pub fn vstep(
    x_next: &HsiCube,
    xt: &HsiCube,
    lap: &SpatialGradOp,
    mu_p: f64,
    nu_p: f64,
) -> Result<HsiCube> {
    let sys = VStepSystem::new(x_next, xt, lap, mu_p, nu_p)?;
    let dims = x_next.dims();
    let (bands, n) = (dims.bands, dims.pixels());

    // pixel-major copies so each frequency's spectral vector is contiguous
    let mut x_pm = vec![Complex64::new(0.0, 0.0); bands * n];
    let mut xt_pm = x_pm.clone();
    transpose(sys.x_next.data(), &mut x_pm, bands, n);
    transpose(sys.xt.data(), &mut xt_pm, bands, n);

    let mut v_pm = vec![Complex64::new(0.0, 0.0); bands * n];
    v_pm.par_chunks_mut(bands)
        .zip(x_pm.par_chunks(bands).zip(xt_pm.par_chunks(bands)))
        .enumerate()
        .for_each(|(f, (out, (x, xt)))| sys.solve_pixel_major(f, x, xt, out));

    let mut v_bm = x_pm;
    transpose(&v_pm, &mut v_bm, n, bands);
    let plan = Fft2::new(dims.height, dims.width);
    idft2_with(&plan, FreqCube::from_vec(dims, v_bm)?)
}

/// Gradient of the V-step objective (up to a factor 2):
/// `rho (v - x) + mu D^T D (v - xt) + nu E^T E (v - xt)`, in the image domain.
pub fn vstep_gradient(
    v: &HsiCube,
    x_next: &HsiCube,
    xt: &HsiCube,
    lap: &SpatialGradOp,
    rho: f64,
    mu: f64,
    nu: f64,
) -> Result<HsiCube> {
    let diff = v.sub(xt)?;
    let mut g = v.sub(x_next)?.scale(rho);
    if mu > 0.0 {
        g = g.axpy(mu, &lap.adjoint(&lap.apply(&diff)?)?)?;
    }
    if nu > 0.0 && v.bands() >= 2 {
        g = g.axpy(nu, &spectral_diff_adjoint(&spectral_diff_apply(&diff)?)?)?;
    }
    Ok(g)
}

/// The V-step objective `rho|x - v|^2 + mu|D(v - xt)|^2 + nu|E(v - xt)|^2`.
pub fn vstep_objective(
    v: &HsiCube,
    x_next: &HsiCube,
    xt: &HsiCube,
    lap: &SpatialGradOp,
    rho: f64,
    mu: f64,
    nu: f64,
) -> Result<f64> {
    Ok(rho * x_next.sub(v)?.norm_sq() + crate::gradient::regularizer_value(v, xt, lap, mu, nu)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn tf_examples() {
        let g = spectral_gram_tridiag(4).unwrap();
        assert_eq!(assemble_tf(3.0, &g, 0.0, 0.0), TridiagMatrix::identity(4));

        let t = assemble_tf(0.0, &spectral_gram_tridiag(3).unwrap(), 50.0, 1.0);
        assert_eq!(t.diag, vec![2.0, 3.0, 2.0]);
        assert_eq!(t.lower, vec![-1.0, -1.0]);
        assert_eq!(t.upper, vec![-1.0, -1.0]);

        let t = assemble_tf(2.5, &spectral_gram_tridiag(6).unwrap(), 0.3, 0.7);
        assert!(t.is_symmetric());
        let eig = nalgebra::SymmetricEigen::new(t.to_dense());
        assert!(eig.eigenvalues.min() > 0.0);
        for i in 0..6 {
            let off: f64 = (0..6).filter(|&j| j != i).map(|j| t.get(i, j).abs()).sum();
            assert!(t.get(i, i) > off);
        }
    }

    #[test]
    fn no_regularization_returns_x_next() {
        let lap = SpatialGradOp::laplacian(5, 4).unwrap();
        let x = oracle::random_cube(3, 5, 4, 1);
        let xt = oracle::random_cube(3, 5, 4, 2);
        let sys = VStepSystem::new(&x, &xt, &lap, 0.0, 0.0).unwrap();
        for f in 0..20 {
            let v = solve_frequency(&sys, f).unwrap();
            for (b, vb) in v.iter().enumerate() {
                assert_eq!(*vb, sys.x_next.data()[b * 20 + f]);
            }
        }
        let v = vstep(&x, &xt, &lap, 0.0, 0.0).unwrap();
        assert!(v.sub(&x).unwrap().max_abs() < 1e-14);
        assert!(solve_frequency(&sys, 20).is_err());
    }

    #[test]
    fn consensus_fixed_point() {
        let lap = SpatialGradOp::laplacian(6, 6).unwrap();
        let xt = oracle::random_cube(4, 6, 6, 3);
        let sys = VStepSystem::new(&xt, &xt, &lap, 50.0, 1.0).unwrap();
        for f in [0, 7, 35] {
            let v = solve_frequency(&sys, f).unwrap();
            for (b, vb) in v.iter().enumerate() {
                assert!((vb - sys.xt.data()[b * 36 + f]).norm() < 1e-10);
            }
        }
        let v = vstep(&xt, &xt, &lap, 50.0, 1.0).unwrap();
        assert!(v.sub(&xt).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn frequency_solve_matches_dense() {
        let lap = SpatialGradOp::laplacian(4, 4).unwrap();
        let x = oracle::random_cube(5, 4, 4, 7);
        let xt = oracle::random_cube(5, 4, 4, 8);
        let sys = VStepSystem::new(&x, &xt, &lap, 50.0, 1.0).unwrap();
        for f in 0..16 {
            let v = solve_frequency(&sys, f).unwrap();
            let rhs = sys.rhs(f);
            let t = sys.tf(f).to_dense().map(|v| Complex64::new(v, 0.0));
            let want = t
                .clone()
                .lu()
                .solve(&DVector::from_vec(rhs.clone()))
                .unwrap();
            for b in 0..5 {
                assert!((v[b] - want[b]).norm() <= 1e-12 * want.norm().max(1.0));
            }
            let back = &t * DVector::from_vec(v.clone());
            let r: f64 = back.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum();
            let rn: f64 = rhs.iter().map(|v| v.norm_sqr()).sum();
            assert!(r.sqrt() <= 1e-10 * rn.sqrt());
        }
    }

    #[test]
    fn vstep_matches_dense_minimizer() {
        let lap = SpatialGradOp::laplacian(6, 6).unwrap();
        let x = oracle::random_cube(3, 6, 6, 11);
        let xt = oracle::random_cube(3, 6, 6, 12);
        let (rho, mu, nu) = (0.001, 0.05, 0.001);
        let v = vstep(&x, &xt, &lap, mu / rho, nu / rho).unwrap();
        let want = oracle::dense_vstep(&x, &xt, lap.taps(0), rho, mu, nu);
        assert!(v.sub(&want).unwrap().norm() / want.norm() < 1e-8);

        let obj = |c: &HsiCube| vstep_objective(c, &x, &xt, &lap, rho, mu, nu).unwrap();
        assert!(obj(&v) <= obj(&x));
        assert!(obj(&v) <= obj(&xt));
    }

    #[test]
    fn first_order_optimality() {
        let lap = SpatialGradOp::laplacian(8, 6).unwrap();
        let x = oracle::random_cube(5, 8, 6, 13);
        let xt = oracle::random_cube(5, 8, 6, 14);
        let (rho, mu, nu) = (0.5, 0.2, 0.7);
        let v = vstep(&x, &xt, &lap, mu / rho, nu / rho).unwrap();
        let g = vstep_gradient(&v, &x, &xt, &lap, rho, mu, nu).unwrap();
        let scale = rho * x.norm() + mu * 64.0 * xt.norm() + nu * 4.0 * xt.norm();
        assert!(g.norm() <= 1e-8 * scale);
    }

    #[test]
    fn per_band_laplacian_uses_band_power() {
        let mut s2 = crate::gradient::LAPLACIAN_STENCIL;
        s2.iter_mut().for_each(|v| *v *= 0.5);
        let lap = SpatialGradOp::per_band(
            vec![
                crate::gradient::LAPLACIAN_STENCIL,
                s2,
                crate::gradient::LAPLACIAN_STENCIL,
            ],
            4,
            4,
        )
        .unwrap();
        let x = oracle::random_cube(3, 4, 4, 1);
        let xt = oracle::random_cube(3, 4, 4, 2);
        let v = vstep(&x, &xt, &lap, 2.0, 0.5).unwrap();
        let g = vstep_gradient(&v, &x, &xt, &lap, 1.0, 2.0, 0.5).unwrap();
        assert!(g.norm() < 1e-10 * x.norm() * 100.0);
    }

    #[test]
    fn single_band_has_no_spectral_term() {
        let lap = SpatialGradOp::laplacian(4, 4).unwrap();
        let x = oracle::random_cube(1, 4, 4, 1);
        let xt = oracle::random_cube(1, 4, 4, 2);
        let v = vstep(&x, &xt, &lap, 1.0, 5.0).unwrap();
        let v_no_nu = vstep(&x, &xt, &lap, 1.0, 0.0).unwrap();
        assert!(v.sub(&v_no_nu).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn dense_vstep_system_is_spd() {
        let lap = SpatialGradOp::laplacian(3, 3).unwrap();
        let (d, e) = oracle::dense_regularizers(crate::cube::Dims::new(2, 3, 3), lap.taps(0));
        let a: DMatrix<f64> =
            DMatrix::identity(18, 18) + d.transpose() * &d * 2.0 + e.transpose() * &e;
        assert!(nalgebra::SymmetricEigen::new(a).eigenvalues.min() >= 1.0 - 1e-12);
    }
}
