//! X-step of the splitting: minimize
//! `|Y - S B X|^2 + |Z - R X|^2 + rho |X - V|^2` over `X`.
//!
//! Setting the gradient to zero gives the Sylvester equation
//! `C1 X + X C2 = C3` with
//!
//! * `C1 = R^T R + rho I` (B x B, symmetric positive definite),
//! * `C2 = (SB)^T (SB)` acting on every band (never formed),
//! * `C3 = R^T Z + (SB)^T Y + rho V`.
//!
//! [`solve_fast`] diagonalizes `C1 = Q diag(lambda) Q^T` and, for a circulant
//! blur, works in the 2D Fourier domain where decimation by `s` couples only
//! the `s^2` frequencies of one aliasing group. On each group, `(SB)^T (SB)`
//! is the rank-one matrix `a a^H / s^2` with `a_k = conj(h_k) p_k` (`h` the
//! blur response, `p_k` the phase of the sampling lattice), so every group
//! solve is a Sherman-Morrison update of the scalar `lambda` solve.
//!
//! [`solve_cg`] runs conjugate gradients on the same operator and serves as
//! both the oracle for the fast path and its fallback.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{Dims, HsiCube};
use crate::degradation::{band_mix, DegradationModel};
use crate::error::{HsError, Result};

/// Tolerance of the conjugate-gradient fallback used by [`solve`].
pub const FALLBACK_CG_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FastFrequency,
    ConjugateGradient,
}

/// `C1 X + X C2 = C3` for one X-step.
#[derive(Clone, Debug)]
pub struct SylvesterSystem<'m> {
    model: &'m DegradationModel,
    c1: DMatrix<f64>,
    c3: HsiCube,
    rho: f64,
}

#[derive(Clone, Debug)]
pub struct SylvesterSolution {
    pub x: HsiCube,
    /// `|C1 X + X C2 - C3|_F / |C3|_F`, recomputed after the solve.
    pub residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
    pub converged: bool,
}

/// Assemble `C1` and `C3` from the observations and the current `V`.
pub fn build_system<'m>(
    model: &'m DegradationModel,
    y: &HsiCube,
    z: &HsiCube,
    v: &HsiCube,
    rho: f64,
) -> Result<SylvesterSystem<'m>> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(HsError::InvalidParameter(format!(
            "rho must be positive, got {rho}"
        )));
    }
    model.check_hr(v)?;
    y.check_dims(model.lr_dims()?)?;
    z.check_dims(model.rgb_dims())?;

    let r = model.srf.to_dmatrix();
    let bands = r.ncols();
    let c1 = r.transpose() * &r + DMatrix::identity(bands, bands) * rho;

    let mut c3 = model.srf.adjoint(z)?;
    let back = model.spatial_adjoint(y)?;
    for ((c, b), vv) in c3.data_mut().iter_mut().zip(back.data()).zip(v.data()) {
        *c += b + rho * vv;
    }
    Ok(SylvesterSystem { model, c1, c3, rho })
}

impl<'m> SylvesterSystem<'m> {
    /// A system with an explicit right-hand side (used for tests and
    /// benchmarks where `C3` is drawn directly).
    pub fn with_rhs(model: &'m DegradationModel, c3: HsiCube, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(HsError::InvalidParameter(format!(
                "rho must be positive, got {rho}"
            )));
        }
        model.check_hr(&c3)?;
        let r = model.srf.to_dmatrix();
        let bands = r.ncols();
        let c1 = r.transpose() * &r + DMatrix::identity(bands, bands) * rho;
        Ok(Self { model, c1, c3, rho })
    }

    pub fn c1(&self) -> &DMatrix<f64> {
        &self.c1
    }

    pub fn c3(&self) -> &HsiCube {
        &self.c3
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn model(&self) -> &DegradationModel {
        self.model
    }

    pub fn dims(&self) -> Dims {
        self.c3.dims()
    }

    /// `C1 X + X C2`, matrix-free.
    pub fn apply(&self, x: &HsiCube) -> Result<HsiCube> {
        x.check_dims(self.dims())?;
        let c1 = &self.c1;
        let mut out = band_mix(x, x.bands(), |o, i| c1[(o, i)], x.bands());
        let c2x = self.model.spatial_adjoint(&self.model.spatial(x)?)?;
        for (o, v) in out.data_mut().iter_mut().zip(c2x.data()) {
            *o += v;
        }
        Ok(out)
    }
}

/// `sylvester_residual`: `|C1 X + X C2 - C3|_F / max(|C3|_F, eps)`.
pub fn sylvester_residual(sys: &SylvesterSystem<'_>, x: &HsiCube) -> Result<f64> {
    let ax = sys.apply(x)?;
    let r = ax.sub(&sys.c3)?;
    Ok(r.norm() / sys.c3.norm().max(f64::MIN_POSITIVE))
}

/// Conjugate gradients on the vectorized (symmetric positive definite)
/// Sylvester operator. On non-convergence the best iterate seen is returned
/// with `converged == false`.
pub fn solve_cg(
    sys: &SylvesterSystem<'_>,
    x0: &HsiCube,
    tol: f64,
    max_iter: usize,
) -> Result<SylvesterSolution> {
    if !(tol > 0.0) {
        return Err(HsError::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    x0.check_dims(sys.dims())?;
    let b_norm = sys.c3.norm();
    if b_norm == 0.0 {
        return Ok(SylvesterSolution {
            x: HsiCube::zeros(sys.dims())?,
            residual: 0.0,
            method: SolveMethod::ConjugateGradient,
            iterations: 0,
            converged: true,
        });
    }

    let mut x = x0.clone();
    let mut r = sys.c3.sub(&sys.apply(&x)?)?;
    let mut rr = r.norm_sq();
    let mut best = (rr.sqrt() / b_norm, x.clone());
    let mut p = r.clone();
    let mut iterations = 0;

    while iterations < max_iter && rr.sqrt() / b_norm > tol {
        let ap = sys.apply(&p)?;
        let pap = p.dot(&ap)?;
        if !(pap > 0.0) {
            return Err(HsError::Numerical(format!(
                "conjugate gradient breakdown: p^T A p = {pap:e}"
            )));
        }
        let alpha = rr / pap;
        x = x.axpy(alpha, &p)?;
        r = r.axpy(-alpha, &ap)?;
        iterations += 1;
        let mut rr_new = r.norm_sq();

        if rr_new.sqrt() / b_norm <= tol || iterations % 50 == 0 {
            // replace the recurrence residual by the true one to avoid drift
            r = sys.c3.sub(&sys.apply(&x)?)?;
            rr_new = r.norm_sq();
            if rr_new.sqrt() / b_norm < best.0 {
                best = (rr_new.sqrt() / b_norm, x.clone());
            }
            if rr_new.sqrt() / b_norm > tol {
                // restart along the true residual
                p = r.clone();
                rr = rr_new;
                continue;
            }
        }
        let beta = rr_new / rr;
        p = r.axpy(beta, &p)?;
        rr = rr_new;
    }

    let residual = sylvester_residual(sys, &x)?;
    let (x, residual) = if residual <= best.0 {
        (x, residual)
    } else {
        (best.1, best.0)
    };
    Ok(SylvesterSolution {
        converged: residual <= tol,
        x,
        residual,
        method: SolveMethod::ConjugateGradient,
        iterations,
    })
}

/// Per-frequency data shared by every eigen-channel of a fast solve.
struct AliasingGroups {
    /// `conj(h_k) * p_k` for every frequency `k`, row-major.
    a: Vec<Complex64>,
    /// `sum |a_k|^2` over each group, indexed by the group's base frequency.
    a_norm_sq: Vec<f64>,
    lr_height: usize,
    lr_width: usize,
    factor: usize,
}

impl AliasingGroups {
    fn new(model: &DegradationModel) -> Result<Self> {
        let (h, w) = (model.blur.height(), model.blur.width());
        let lr = model.lr_dims()?;
        let s = model.down.factor();
        let (pr, pc) = model.down.phase();
        let resp = model.blur.freq_response();
        let mut a = Vec::with_capacity(h * w);
        for kr in 0..h {
            for kc in 0..w {
                let ang = -2.0
                    * PI
                    * (((kr * pr) % h) as f64 / h as f64 + ((kc * pc) % w) as f64 / w as f64);
                a.push(resp[kr * w + kc].conj() * Complex64::from_polar(1.0, ang));
            }
        }
        let mut a_norm_sq = vec![0.0; lr.height * lr.width];
        for (g, acc) in a_norm_sq.iter_mut().enumerate() {
            let (br, bc) = (g / lr.width, g % lr.width);
            for tr in 0..s {
                for tc in 0..s {
                    *acc += a[(br + tr * lr.height) * w + bc + tc * lr.width].norm_sqr();
                }
            }
        }
        Ok(Self {
            a,
            a_norm_sq,
            lr_height: lr.height,
            lr_width: lr.width,
            factor: s,
        })
    }

    /// Solve `(lambda I + a a^H / s^2) u = c` group by group, in place.
    fn solve_channel(&self, lambda: f64, plane: &mut [Complex64], width: usize) {
        let s = self.factor;
        let beta = 1.0 / (s * s) as f64;
        let inv_lambda = 1.0 / lambda;
        let mut idx = vec![0usize; s * s];
        for br in 0..self.lr_height {
            for bc in 0..self.lr_width {
                for tr in 0..s {
                    for tc in 0..s {
                        idx[tr * s + tc] =
                            (br + tr * self.lr_height) * width + bc + tc * self.lr_width;
                    }
                }
                // a^H c over the group
                let mut ahc = Complex64::new(0.0, 0.0);
                for &k in &idx {
                    ahc += self.a[k].conj() * plane[k];
                }
                let denom = lambda + beta * self.a_norm_sq[br * self.lr_width + bc];
                let coef = ahc * (beta / denom);
                for &k in &idx {
                    plane[k] = (plane[k] - self.a[k] * coef) * inv_lambda;
                }
            }
        }
    }
}

/// Fast solve via eigendecomposition of `C1` and per-aliasing-group
/// Sherman-Morrison updates in the Fourier domain.
///
/// Requires a circulant (periodic-boundary) blur and image dims divisible by
/// the downsampling factor.
pub fn solve_fast(sys: &SylvesterSystem<'_>) -> Result<SylvesterSolution> {
    let model = sys.model;
    if !model.blur.is_circulant() {
        return Err(HsError::UnsupportedStructure(
            "blur is not circulant (non-periodic boundary)".into(),
        ));
    }
    let groups = AliasingGroups::new(model)?;
    let dims = sys.dims();
    let bands = dims.bands;

    let eig = SymmetricEigen::new(sys.c1.clone());
    let q = &eig.eigenvectors;
    let lambdas = &eig.eigenvalues;
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(HsError::Numerical(format!(
            "C1 is not positive definite (eigenvalue {l:e})"
        )));
    }

    // Q^T C3, then per-channel frequency solves, then Q X_bar.
    let c3_bar = band_mix(&sys.c3, bands, |o, i| q[(i, o)], bands);
    let plan = model.blur.circulant().plan();
    let n = dims.pixels();
    let mut planes: Vec<Complex64> = c3_bar
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    planes.par_chunks_mut(n).enumerate().for_each(|(l, plane)| {
        plan.forward(plane);
        groups.solve_channel(lambdas[l], plane, dims.width);
        plan.inverse(plane);
    });
    let x_bar = HsiCube::from_parts(dims, planes.iter().map(|v| v.re).collect());
    let x = band_mix(&x_bar, bands, |o, i| q[(o, i)], bands);

    let residual = sylvester_residual(sys, &x)?;
    Ok(SylvesterSolution {
        x,
        residual,
        method: SolveMethod::FastFrequency,
        iterations: 1,
        converged: true,
    })
}

/// Fast solve with conjugate-gradient fallback when the fast path's
/// structural preconditions do not hold.
pub fn solve(sys: &SylvesterSystem<'_>, x0: Option<&HsiCube>) -> Result<SylvesterSolution> {
    match solve_fast(sys) {
        Ok(sol) => Ok(sol),
        Err(HsError::UnsupportedStructure(reason)) => {
            log::debug!("fast Sylvester path unavailable ({reason}); using CG");
            let zero;
            let start = match x0 {
                Some(x) => x,
                None => {
                    zero = HsiCube::zeros(sys.dims())?;
                    &zero
                }
            };
            let max_iter = (10 * sys.dims().len()).clamp(100, 5000);
            solve_cg(sys, start, FALLBACK_CG_TOL, max_iter)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::{BlurOperator, Boundary, Downsampler, KernelSpec, SpectralResponse};
    use crate::oracle;

    fn model(
        bands: usize,
        h: usize,
        w: usize,
        spec: KernelSpec,
        s: usize,
        phase: (usize, usize),
    ) -> DegradationModel {
        let mut m = vec![0.0; 3 * bands];
        for (i, v) in m.iter_mut().enumerate() {
            *v = 0.1 + ((i * 7) % 11) as f64 / 11.0;
        }
        let rows = if bands > 3 { 3 } else { bands - 1 };
        DegradationModel::new(
            BlurOperator::new(spec, h, w).unwrap(),
            Downsampler::with_phase(s, phase).unwrap(),
            SpectralResponse::new(rows, bands, m[..rows * bands].to_vec()).unwrap(),
        )
    }

    fn rel(a: &HsiCube, b: &HsiCube) -> f64 {
        a.sub(b).unwrap().norm() / b.norm()
    }

    #[test]
    fn zero_inputs_give_zero_rhs() {
        let m = model(4, 4, 4, KernelSpec::UniformBlock(2), 2, (0, 0));
        let zero = |d: Dims| HsiCube::zeros(d).unwrap();
        let sys = build_system(
            &m,
            &zero(m.lr_dims().unwrap()),
            &zero(m.rgb_dims()),
            &zero(m.hr_dims()),
            0.5,
        )
        .unwrap();
        assert_eq!(sys.c3().max_abs(), 0.0);
    }

    #[test]
    fn rhs_matches_dense_assembly() {
        let m = model(4, 4, 4, KernelSpec::UniformBlock(2), 2, (1, 0));
        let y = oracle::random_cube(4, 2, 2, 1);
        let z = oracle::random_cube(3, 4, 4, 2);
        let v = oracle::random_cube(4, 4, 4, 3);
        let sys = build_system(&m, &y, &z, &v, 0.3).unwrap();
        let want = oracle::dense_c3(&m, &y, &z, &v, 0.3);
        assert!(sys.c3().sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn c1_eigenvalues_bounded_by_rho() {
        let m = model(31, 4, 4, KernelSpec::UniformBlock(2), 2, (0, 0));
        let sys = SylvesterSystem::with_rhs(&m, oracle::random_cube(31, 4, 4, 0), 0.001).unwrap();
        let eig = SymmetricEigen::new(sys.c1().clone());
        assert!(eig.eigenvalues.min() >= 0.001 - 1e-12);
    }

    #[test]
    fn build_rejects_bad_input() {
        let m = model(4, 4, 4, KernelSpec::UniformBlock(2), 2, (0, 0));
        let y = oracle::random_cube(4, 2, 2, 1);
        let z = oracle::random_cube(3, 4, 4, 2);
        let v = oracle::random_cube(4, 4, 4, 3);
        assert!(build_system(&m, &y, &z, &v, 0.0).is_err());
        assert!(build_system(&m, &z, &z, &v, 1.0).is_err());
        assert!(build_system(&m, &y, &v, &v, 1.0).is_err());
    }

    #[test]
    fn cg_without_spatial_coupling_is_per_pixel_solve() {
        // unit-sum kernels cannot give C2 = 0; with S = B = I, C2 = I and the
        // system still decouples pixel by pixel
        let m = model(3, 4, 4, KernelSpec::UniformBlock(1), 1, (0, 0));
        let c3 = oracle::random_cube(3, 4, 4, 9);
        let sys = SylvesterSystem::with_rhs(&m, c3.clone(), 0.7).unwrap();
        let sol = solve_cg(&sys, &HsiCube::zeros(c3.dims()).unwrap(), 1e-13, 500).unwrap();
        let a = sys.c1() + DMatrix::identity(3, 3);
        let want = HsiCube::from_matrix(&(a.lu().solve(&c3.to_matrix()).unwrap()), 4, 4).unwrap();
        assert!(rel(&sol.x, &want) < 1e-10);
        assert!(sol.converged);
    }

    #[test]
    fn cg_matches_dense_kronecker_solve() {
        let m = model(3, 4, 4, KernelSpec::UniformBlock(2), 2, (0, 0));
        let c3 = oracle::random_cube(3, 4, 4, 4);
        let sys = SylvesterSystem::with_rhs(&m, c3.clone(), 0.2).unwrap();
        let sol = solve_cg(&sys, &HsiCube::zeros(c3.dims()).unwrap(), 1e-12, 1000).unwrap();
        let (c1, c2) = oracle::dense_sylvester_coefficients(&m, 0.2);
        let want = oracle::dense_sylvester_solve(&c1, &c2, &c3);
        assert!(rel(&sol.x, &want) < 1e-8);
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn cg_warm_start_at_solution_returns_immediately() {
        let m = model(3, 4, 4, KernelSpec::UniformBlock(2), 2, (0, 0));
        let c3 = oracle::random_cube(3, 4, 4, 4);
        let sys = SylvesterSystem::with_rhs(&m, c3, 0.2).unwrap();
        let exact = solve_fast(&sys).unwrap().x;
        let sol = solve_cg(&sys, &exact, 1e-8, 100).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.residual <= 1e-8);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let m = model(3, 4, 4, KernelSpec::UniformBlock(2), 2, (0, 0));
        let sys = SylvesterSystem::with_rhs(&m, oracle::random_cube(3, 4, 4, 4), 0.01).unwrap();
        let sol = solve_cg(&sys, &HsiCube::zeros(sys.dims()).unwrap(), 1e-14, 2).unwrap();
        assert!(!sol.converged);
        assert!(sol.residual < 1.0);
    }

    #[test]
    fn fast_identity_blur_no_decimation() {
        let m = model(4, 6, 5, KernelSpec::UniformBlock(1), 1, (0, 0));
        let c3 = oracle::random_cube(4, 6, 5, 8);
        let sys = SylvesterSystem::with_rhs(&m, c3.clone(), 0.4).unwrap();
        let fast = solve_fast(&sys).unwrap();
        let a = sys.c1() + DMatrix::identity(4, 4);
        let want = HsiCube::from_matrix(&(a.lu().solve(&c3.to_matrix()).unwrap()), 6, 5).unwrap();
        assert!(rel(&fast.x, &want) < 1e-12);
        let cg = solve_cg(&sys, &HsiCube::zeros(c3.dims()).unwrap(), 1e-12, 500).unwrap();
        assert!(rel(&fast.x, &cg.x) < 1e-9);
    }

    #[test]
    fn fast_matches_cg_and_dense() {
        for (phase, spec) in [
            ((0, 0), KernelSpec::UniformBlock(2)),
            ((1, 0), KernelSpec::UniformBlock(2)),
            (
                (1, 1),
                KernelSpec::Custom {
                    rows: 3,
                    cols: 2,
                    values: vec![0.5, 0.1, 0.3, 0.2, 0.15, 0.05],
                },
            ),
        ] {
            let m = model(3, 8, 8, spec, 2, phase);
            let c3 = oracle::random_cube(3, 8, 8, 31);
            let sys = SylvesterSystem::with_rhs(&m, c3.clone(), 0.05).unwrap();
            let fast = solve_fast(&sys).unwrap();
            assert!(fast.residual <= 1e-8, "residual {}", fast.residual);
            let cg = solve_cg(&sys, &HsiCube::zeros(c3.dims()).unwrap(), 1e-12, 5000).unwrap();
            assert!(rel(&fast.x, &cg.x) < 1e-8);
            let (c1, c2) = oracle::dense_sylvester_coefficients(&m, 0.05);
            let dense = oracle::dense_sylvester_solve(&c1, &c2, &c3);
            assert!(rel(&fast.x, &dense) < 1e-8);
        }
    }

    #[test]
    fn fast_desk_scale_block_geometry() {
        let m = DegradationModel::new(
            BlurOperator::new(KernelSpec::UniformBlock(32), 64, 64).unwrap(),
            Downsampler::new(32).unwrap(),
            SpectralResponse::default_rgb(31).unwrap(),
        );
        let sys = SylvesterSystem::with_rhs(&m, oracle::random_cube(31, 64, 64, 5), 0.001).unwrap();
        let t = std::time::Instant::now();
        let sol = solve_fast(&sys).unwrap();
        assert!(sol.residual <= 1e-8, "residual {}", sol.residual);
        assert!(t.elapsed().as_secs_f64() < 1.0);
    }

    #[test]
    fn fast_rejects_non_circulant_and_solve_falls_back() {
        let mut m = model(3, 4, 4, KernelSpec::UniformBlock(2), 2, (0, 0));
        m.blur =
            BlurOperator::with_boundary(KernelSpec::UniformBlock(2), 4, 4, Boundary::Zero).unwrap();
        let c3 = oracle::random_cube(3, 4, 4, 2);
        let sys = SylvesterSystem::with_rhs(&m, c3.clone(), 0.3).unwrap();
        assert!(matches!(
            solve_fast(&sys),
            Err(HsError::UnsupportedStructure(_))
        ));
        let sol = solve(&sys, None).unwrap();
        assert_eq!(sol.method, SolveMethod::ConjugateGradient);
        assert!(sol.residual <= FALLBACK_CG_TOL);
        let (c1, c2) = oracle::dense_sylvester_coefficients(&m, 0.3);
        let dense = oracle::dense_sylvester_solve(&c1, &c2, &c3);
        assert!(rel(&sol.x, &dense) < 1e-7);
    }

    #[test]
    fn residual_examples() {
        let m = model(3, 4, 4, KernelSpec::UniformBlock(2), 2, (0, 0));
        let c3 = oracle::random_cube(3, 4, 4, 6);
        let sys = SylvesterSystem::with_rhs(&m, c3.clone(), 0.2).unwrap();
        let exact = solve_fast(&sys).unwrap().x;
        assert!(sylvester_residual(&sys, &exact).unwrap() <= 1e-8);
        let zero = HsiCube::zeros(c3.dims()).unwrap();
        assert!((sylvester_residual(&sys, &zero).unwrap() - 1.0).abs() < 1e-15);

        for seed in 0..5 {
            let dir = oracle::random_cube(3, 4, 4, 100 + seed);
            let mut last = 0.0;
            for step in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
                let r = sylvester_residual(&sys, &exact.axpy(step, &dir).unwrap()).unwrap();
                assert!(r > last);
                last = r;
            }
        }
    }

    #[test]
    fn solution_is_linear_in_rhs() {
        let m = model(4, 8, 8, KernelSpec::UniformBlock(2), 2, (0, 0));
        let y = oracle::random_cube(4, 4, 4, 1);
        let z = oracle::random_cube(3, 8, 8, 2);
        let v = oracle::random_cube(4, 8, 8, 3);
        let alpha = -2.75;
        let base = solve_fast(&build_system(&m, &y, &z, &v, 0.01).unwrap()).unwrap();
        let scaled = solve_fast(
            &build_system(&m, &y.scale(alpha), &z.scale(alpha), &v.scale(alpha), 0.01).unwrap(),
        )
        .unwrap();
        assert!(rel(&scaled.x, &base.x.scale(alpha)) < 1e-10);
    }
}
