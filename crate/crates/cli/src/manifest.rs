use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hsfuse_core::{HsError, MetricReport};
use serde::Serialize;
use serde_json::Value;

#[derive(Serialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Serialize, Debug, Clone)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Record of one invocation, written whether or not the command succeeded.
#[derive(Serialize, Debug, Clone)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
    pub threads: usize,
    pub config: Value,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub metrics: Option<MetricReport>,
    pub prior_metrics: Option<MetricReport>,
    pub objective_trace: Vec<f64>,
    pub details: BTreeMap<String, Value>,
    pub timings: Vec<Timing>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, threads: usize) -> Self {
        Self {
            tool: "hsfuse",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            status: Status::Ok,
            exit_code: 0,
            error: None,
            threads,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            metrics: None,
            prior_metrics: None,
            objective_trace: Vec::new(),
            details: BTreeMap::new(),
            timings: Vec::new(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.to_string(), path.to_path_buf());
    }

    pub fn output(&mut self, name: &str, path: &Path) {
        self.outputs.insert(name.to_string(), path.to_path_buf());
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.details.insert(key.to_string(), v);
    }

    /// Runs `f` and records its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn fail(&mut self, err: &HsError, code: i32) {
        self.status = Status::Failed;
        self.exit_code = code;
        self.error = Some(err.to_string());
    }

    pub fn write(&self, path: &Path) -> Result<(), HsError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| HsError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}
