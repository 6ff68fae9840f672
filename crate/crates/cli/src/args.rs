use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsfuse_core::{Dtype, HsError, KernelSpec};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "hsfuse",
    version,
    about = "Hyperspectral/RGB fusion super-resolution"
)]
pub struct Cli {
    /// Worker threads; 0 uses every core. `--threads 1` gives bit-reproducible runs.
    #[arg(long, global = true, env = "HSFUSE_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Where to write the run manifest. Defaults to `<output>.<command>.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic ground-truth cube.
    Simulate(SimulateArgs),
    /// Produce the low-resolution cube Y and the RGB image Z from a cube.
    Degrade(DegradeArgs),
    /// Reconstruct the high-resolution cube from Y, Z and a prior.
    Fuse(FuseArgs),
    /// Score a reconstruction against a reference.
    Evaluate(EvaluateArgs),
    /// Write the absolute error of one band as a PGM image.
    Errormap(ErrormapArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 31)]
    pub bands: usize,
    /// Square image side; overridden by --height/--width.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub endmembers: usize,
    /// Correlation length of the abundance fields in pixels.
    #[arg(long, default_value_t = 2.0)]
    pub smoothness: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    pub dtype: DtypeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct ModelArgs {
    /// `block:<k>`, `gauss:<sigma>[:<support>]` or `none`. Defaults to `block:<factor>`.
    #[arg(long)]
    pub blur: Option<BlurArg>,
    /// Downsampling factor.
    #[arg(long)]
    pub factor: Option<usize>,
    /// Spectral response CSV, or `default` for the built-in RGB response.
    #[arg(long, default_value = "default")]
    pub srf: String,
}

#[derive(Args, Debug, Serialize)]
pub struct DegradeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    pub dtype: DtypeArg,
    #[arg(long)]
    pub out_y: PathBuf,
    #[arg(long)]
    pub out_z: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct FuseArgs {
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub z: PathBuf,
    /// `naive` or `file:<path>`.
    #[arg(long, default_value = "naive")]
    pub prior: PriorArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.05)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.001)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.001)]
    pub rho: f64,
    /// Iteration cap K.
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    /// Relative-change stopping tolerance.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Multiply rho by this factor after every iteration.
    #[arg(long)]
    pub rho_growth: Option<f64>,
    /// Ground truth; when given the manifest carries metrics.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    pub dtype: DtypeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub x_hat: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub factor: usize,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    /// PSNR from the MSE of the whole cube instead of the band mean.
    #[arg(long)]
    pub global_psnr: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ErrormapArgs {
    #[arg(long)]
    pub x_hat: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// One-based band number.
    #[arg(
        long,
        conflicts_with = "wavelength",
        required_unless_present = "wavelength"
    )]
    pub band: Option<usize>,
    /// Pick the band nearest this wavelength (nm) on an even grid over
    /// --lambda-min..=--lambda-max.
    #[arg(long)]
    pub wavelength: Option<f64>,
    #[arg(long, default_value_t = 400.0)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 700.0)]
    pub lambda_max: f64,
    /// Absolute error mapped to white.
    #[arg(long, default_value_t = hsfuse_core::io::DEFAULT_MAX_ERROR)]
    pub max_error: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DtypeArg {
    F32,
    F64,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurArg {
    Block(usize),
    Gauss { sigma: f64, support: usize },
    None,
}

impl BlurArg {
    pub fn kernel(&self) -> KernelSpec {
        match *self {
            BlurArg::Block(k) => KernelSpec::UniformBlock(k),
            BlurArg::Gauss { sigma, support } => KernelSpec::Gaussian { sigma, support },
            BlurArg::None => KernelSpec::UniformBlock(1),
        }
    }
}

impl FromStr for BlurArg {
    type Err = HsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HsError::InvalidParameter(format!("bad blur spec {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["none"] => Ok(BlurArg::None),
            ["block", k] => Ok(BlurArg::Block(k.parse().map_err(|_| bad())?)),
            ["gauss", sigma] => {
                let sigma: f64 = sigma.parse().map_err(|_| bad())?;
                Ok(BlurArg::Gauss {
                    sigma,
                    support: (3.0 * sigma).ceil().max(1.0) as usize,
                })
            }
            ["gauss", sigma, support] => Ok(BlurArg::Gauss {
                sigma: sigma.parse().map_err(|_| bad())?,
                support: support.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorArg {
    Naive,
    File(PathBuf),
}

impl FromStr for PriorArg {
    type Err = HsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "naive" => Ok(PriorArg::Naive),
            Some(("file", p)) if !p.is_empty() => Ok(PriorArg::File(PathBuf::from(p))),
            _ => Err(HsError::InvalidParameter(format!(
                "prior must be `naive` or `file:<path>`, got {s:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_specs() {
        assert_eq!("block:32".parse::<BlurArg>().unwrap(), BlurArg::Block(32));
        assert_eq!(
            "gauss:1.5".parse::<BlurArg>().unwrap(),
            BlurArg::Gauss {
                sigma: 1.5,
                support: 5
            }
        );
        assert_eq!(
            "gauss:2:3".parse::<BlurArg>().unwrap(),
            BlurArg::Gauss {
                sigma: 2.0,
                support: 3
            }
        );
        assert_eq!("none".parse::<BlurArg>().unwrap(), BlurArg::None);
        assert!("box:3".parse::<BlurArg>().is_err());
        assert!("block:x".parse::<BlurArg>().is_err());
    }

    #[test]
    fn prior_specs() {
        assert_eq!("naive".parse::<PriorArg>().unwrap(), PriorArg::Naive);
        assert_eq!(
            "file:a/b.hsrc".parse::<PriorArg>().unwrap(),
            PriorArg::File("a/b.hsrc".into())
        );
        assert!("file:".parse::<PriorArg>().is_err());
        assert!("cnn".parse::<PriorArg>().is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn fuse_defaults() {
        let cli =
            Cli::try_parse_from(["hsfuse", "fuse", "--y", "y", "--z", "z", "--out", "x"]).unwrap();
        let Command::Fuse(f) = cli.command else {
            panic!()
        };
        assert_eq!((f.mu, f.nu, f.rho, f.iters), (0.05, 0.001, 0.001, 20));
        assert_eq!(f.prior, PriorArg::Naive);
    }
}
