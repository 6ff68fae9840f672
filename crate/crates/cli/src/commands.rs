use std::fs;
use std::path::Path;

use hsfuse_core::io::band_for_wavelength;
use hsfuse_core::metrics::PsnrMode;
use hsfuse_core::{
    band_wavelengths, evaluate, evaluate_with, export_error_map, generate_scene, load_cube,
    load_srf_csv, make_prior, save_cube, BlurOperator, DegradationModel, Downsampler, HqsConfig,
    HqsSolver, HsError, HsiCube, PriorSource, Result, SceneSpec, SpectralResponse, CSV_HEADER,
};

use crate::args::{
    BlurArg, DegradeArgs, ErrormapArgs, EvaluateArgs, FuseArgs, ModelArgs, PriorArg, ReportFormat,
    SimulateArgs,
};
use crate::manifest::RunManifest;

fn load(m: &mut RunManifest, name: &str, path: &Path) -> Result<HsiCube> {
    m.input(name, path);
    load_cube(path)
}

fn build_model(
    args: &ModelArgs,
    bands: usize,
    height: usize,
    width: usize,
    inferred_factor: Option<usize>,
    m: &mut RunManifest,
) -> Result<DegradationModel> {
    let factor = match (args.factor, inferred_factor) {
        (Some(f), Some(g)) if f != g => {
            return Err(HsError::InvalidParameter(format!(
                "--factor {f} contradicts the input sizes, which imply {g}"
            )))
        }
        (Some(f), _) | (None, Some(f)) => f,
        (None, None) => {
            return Err(HsError::InvalidParameter("--factor is required".into()));
        }
    };
    let blur = args.blur.clone().unwrap_or(BlurArg::Block(factor));
    let blur = BlurOperator::new(blur.kernel(), height, width)?;
    let srf = if args.srf == "default" {
        SpectralResponse::default_rgb(bands)?
    } else {
        let path = Path::new(&args.srf);
        m.input("srf", path);
        load_srf_csv(path)?
    };
    if srf.in_bands() != bands {
        return Err(HsError::InvalidSrf(format!(
            "response covers {} bands, cube has {bands}",
            srf.in_bands()
        )));
    }
    m.detail("factor", factor);
    m.detail("blur_kernel", blur.spec());
    m.detail("cbc_border_px", blur.spec().radius());
    Ok(DegradationModel::new(blur, Downsampler::new(factor)?, srf))
}

pub fn simulate(a: &SimulateArgs, m: &mut RunManifest) -> Result<()> {
    let spec = SceneSpec {
        bands: a.bands,
        height: a.height.unwrap_or(a.size),
        width: a.width.unwrap_or(a.size),
        endmembers: a.endmembers,
        smoothness: a.smoothness,
        seed: a.seed,
    };
    let cube = m.time("generate", |_| generate_scene(&spec))?;
    m.time("save", |_| save_cube(&a.out, &cube, a.dtype.into()))?;
    m.output("cube", &a.out);
    Ok(())
}

pub fn degrade(a: &DegradeArgs, m: &mut RunManifest) -> Result<()> {
    let x = m.time("load", |m| load(m, "input", &a.input))?;
    let model = build_model(&a.model, x.bands(), x.height(), x.width(), None, m)?;
    let model = model.with_noise(a.noise, a.noise_seed);
    let (y, z) = m.time("degrade", |_| model.degrade(&x))?;
    m.time("save", |_| -> Result<()> {
        save_cube(&a.out_y, &y, a.dtype.into())?;
        save_cube(&a.out_z, &z, a.dtype.into())
    })?;
    m.output("y", &a.out_y);
    m.output("z", &a.out_z);
    m.detail("y_dims", y.dims().to_string());
    m.detail("z_dims", z.dims().to_string());
    Ok(())
}

fn infer_factor(y: &HsiCube, z: &HsiCube) -> Result<usize> {
    let (h, w, lh, lw) = (z.height(), z.width(), y.height(), y.width());
    if h % lh != 0 || w % lw != 0 || h / lh != w / lw {
        return Err(HsError::Dimension(format!(
            "RGB image {h}x{w} is not an integer multiple of the {lh}x{lw} hyperspectral grid"
        )));
    }
    Ok(h / lh)
}

pub fn fuse(a: &FuseArgs, m: &mut RunManifest) -> Result<()> {
    let (y, z) = m.time("load", |m| -> Result<_> {
        Ok((load(m, "y", &a.y)?, load(m, "z", &a.z)?))
    })?;
    let factor = infer_factor(&y, &z)?;
    let model = build_model(&a.model, y.bands(), z.height(), z.width(), Some(factor), m)?;
    if model.srf.out_bands() != z.bands() {
        return Err(HsError::DimMismatch {
            expected: format!("{} colour channels", model.srf.out_bands()),
            got: format!("{} in Z", z.bands()),
        });
    }
    let source = match &a.prior {
        PriorArg::Naive => PriorSource::NaiveFusion,
        PriorArg::File(p) => {
            m.input("prior", p);
            PriorSource::ExternalFile(p.clone())
        }
    };
    let prior = m.time("prior", |_| make_prior(&source, &y, &z, &model))?;
    let cfg = HqsConfig {
        mu: a.mu,
        nu: a.nu,
        rho: a.rho,
        max_iter: a.iters,
        rel_tol: a.tol,
        track_objective: true,
        rho_growth: a.rho_growth,
    };
    m.detail("hqs", &cfg);

    let result = m.time("fuse", |m| {
        let solver = HqsSolver::new(&y, &z, &model, &prior, cfg.clone())?;
        solver.run_observed(|rec| {
            m.objective_trace.extend(rec.objective_after_v);
            log::info!(
                "iteration {}: objective {:?}, change {:?}",
                rec.iteration,
                rec.objective_after_v,
                rec.relative_change
            );
        })
    })?;
    m.detail("iterations", result.iterations);
    m.detail("converged", result.converged);
    m.detail("x_step_method", result.x_step_method);
    m.detail("sylvester_residuals", &result.sylvester_residuals);

    m.time("save", |_| save_cube(&a.out, &result.x_hat, a.dtype.into()))?;
    m.output("x_hat", &a.out);

    if let Some(r) = &a.reference {
        let x_ref = load(m, "reference", r)?;
        m.time("evaluate", |m| -> Result<()> {
            m.metrics = Some(evaluate(&result.x_hat, &x_ref, factor)?);
            m.prior_metrics = Some(evaluate(&prior, &x_ref, factor)?);
            Ok(())
        })?;
    }
    Ok(())
}

pub fn evaluate_cmd(a: &EvaluateArgs, m: &mut RunManifest) -> Result<()> {
    let x_hat = load(m, "x_hat", &a.x_hat)?;
    let x_ref = load(m, "reference", &a.reference)?;
    let mode = if a.global_psnr {
        PsnrMode::Global
    } else {
        PsnrMode::BandMean
    };
    let report = m.time("evaluate", |_| {
        evaluate_with(&x_hat, &x_ref, a.factor, mode)
    })?;
    m.metrics = Some(report);
    let text = match a.format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Csv => format!("{CSV_HEADER}\n{}\n", report.to_csv_row()),
    };
    match &a.out {
        Some(p) => {
            fs::write(p, text).map_err(|e| HsError::Io {
                path: p.clone(),
                source: e,
            })?;
            m.output("report", p);
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn errormap(a: &ErrormapArgs, m: &mut RunManifest) -> Result<()> {
    let x_hat = load(m, "x_hat", &a.x_hat)?;
    let x_ref = load(m, "reference", &a.reference)?;
    let bands = x_ref.bands();
    let index = match (a.band, a.wavelength) {
        (Some(0), _) => {
            return Err(HsError::InvalidParameter("band numbers start at 1".into()));
        }
        (Some(b), _) => b - 1,
        (None, Some(wl)) => band_for_wavelength(wl, bands, a.lambda_min, a.lambda_max)?,
        (None, None) => {
            return Err(HsError::InvalidParameter(
                "--band or --wavelength is required".into(),
            ));
        }
    };
    m.detail("band", index + 1);
    if index < bands {
        m.detail(
            "band_center_nm",
            band_wavelengths(bands, a.lambda_min, a.lambda_max)[index],
        );
    }
    m.time("export", |_| {
        export_error_map(&x_hat, &x_ref, index, &a.out, a.max_error)
    })?;
    m.output("error_map", &a.out);
    Ok(())
}
