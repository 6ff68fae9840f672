mod args;
mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use hsfuse_core::HsError;

use args::{Cli, Command};
use manifest::RunManifest;

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(err: &HsError) -> u8 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else if err.is_io() {
        EXIT_IO
    } else {
        EXIT_NUMERICAL
    }
}

fn default_manifest(primary: &Path, command: &str) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(format!(".{command}.json"));
    PathBuf::from(name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: cannot set up thread pool: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    }

    let (name, primary) = match &cli.command {
        Command::Simulate(a) => ("simulate", a.out.clone()),
        Command::Degrade(a) => ("degrade", a.out_y.clone()),
        Command::Fuse(a) => ("fuse", a.out.clone()),
        Command::Evaluate(a) => ("evaluate", a.out.clone().unwrap_or_else(|| a.x_hat.clone())),
        Command::Errormap(a) => ("errormap", a.out.clone()),
    };
    let manifest_path = cli
        .manifest
        .clone()
        .unwrap_or_else(|| default_manifest(&primary, name));
    let config = serde_json::to_value(&cli.command).expect("arguments serialize");
    let mut m = RunManifest::new(name, config, rayon::current_num_threads());

    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &mut m),
        Command::Degrade(a) => commands::degrade(a, &mut m),
        Command::Fuse(a) => commands::fuse(a, &mut m),
        Command::Evaluate(a) => commands::evaluate_cmd(a, &mut m),
        Command::Errormap(a) => commands::errormap(a, &mut m),
    };
    let mut code = 0;
    if let Err(e) = &result {
        code = exit_code(e);
        eprintln!("error: {e}");
        m.fail(e, code as i32);
    }
    if let Err(e) = m.write(&manifest_path) {
        eprintln!("error: cannot write manifest: {e}");
        if code == 0 {
            code = EXIT_IO;
        }
    }
    ExitCode::from(code)
}
