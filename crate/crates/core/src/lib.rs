//! Hyperspectral super-resolution by fusing a low-resolution hyperspectral
//! cube with a high-resolution RGB image.
//!
//! The observation model is `Y = S(B(X))` per band and `Z = R X` per pixel.
//! [`fuse`] recovers `X` by half quadratic splitting: an exact Sylvester solve
//! for the data terms and a per-frequency tridiagonal solve for a
//! gradient-deviation regularizer anchored on a prior cube.
//!
//! ```no_run
//! use hsfuse_core::*;
//!
//! # fn main() -> Result<()> {
//! let x = generate_scene(&SceneSpec::new(31, 64, 64, 5, 7))?;
//! let model = DegradationModel::new(
//!     BlurOperator::new(KernelSpec::UniformBlock(4), 64, 64)?,
//!     Downsampler::new(4)?,
//!     SpectralResponse::default_rgb(31)?,
//! );
//! let (y, z) = model.degrade(&x)?;
//! let prior = make_prior(&PriorSource::NaiveFusion, &y, &z, &model)?;
//! let out = fuse(&y, &z, &model, &prior, &HqsConfig::default())?;
//! println!("{:?}", evaluate(&out.x_hat, &x, 4)?);
//! # Ok(())
//! # }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conv;
pub mod cube;
pub mod degradation;
pub mod error;
pub mod fft;
pub mod gradient;
pub mod hqs;
pub mod io;
pub mod metrics;
pub mod prior;
pub mod sylvester;
pub mod synth;
pub mod tridiag;
pub mod vstep;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use conv::{Circulant2d, Tap};
pub use cube::{dft2_per_band, idft2_per_band, Dims, FreqCube, HsiCube};
pub use degradation::{
    band_wavelengths, BlurOperator, Boundary, DegradationModel, Downsampler, KernelSpec,
    SpectralResponse,
};
pub use error::{HsError, Result};
pub use fft::Fft2;
pub use gradient::{
    regularizer_value, spectral_diff_adjoint, spectral_diff_apply, spectral_gram_tridiag,
    SpatialGradOp, LAPLACIAN_STENCIL,
};
pub use hqs::{
    data_residuals, fuse, objective_value, FusionResult, HqsConfig, HqsSolver, IterationRecord,
};
pub use io::{
    band_for_wavelength, export_error_map, load_cube, load_srf_csv, save_cube, CubeHeader, Dtype,
};
pub use metrics::{evaluate, evaluate_with, MetricReport, PsnrMode, CSV_HEADER};
pub use prior::{make_prior, naive_fusion, PriorSource};
pub use sylvester::{
    build_system, solve, solve_cg, solve_fast, sylvester_residual, SolveMethod, SylvesterSolution,
    SylvesterSystem,
};
pub use synth::{generate_scene, generate_scene_parts, Scene, SceneSpec};
pub use tridiag::{ThomasFactor, TridiagMatrix};
pub use vstep::{vstep, VStepSystem};
