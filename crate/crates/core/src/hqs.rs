//! Half quadratic splitting driver.
//!
//! Alternates the X-step (Sylvester solve, data fidelity) and the V-step
//! (per-frequency tridiagonal solves, regularizer) on the augmented
//! Lagrangian
//!
//! ```text
//! L(X, V) = |Y - SBX|^2 + |Z - RX|^2 + rho |X - V|^2
//!         + mu |D(V - Xt)|^2 + nu |E(V - Xt)|^2
//! ```
//!
//! starting from `V0 = Xt`. Both steps are exact minimizers, so `L` never
//! increases while `rho` is held fixed. The estimate returned is the last X.

use serde::{Deserialize, Serialize};

use crate::cube::HsiCube;
use crate::degradation::DegradationModel;
use crate::error::{HsError, Result};
use crate::gradient::{regularizer_value, SpatialGradOp};
use crate::sylvester::{build_system, solve, SolveMethod};
use crate::vstep::vstep;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HqsConfig {
    pub mu: f64,
    pub nu: f64,
    pub rho: f64,
    pub max_iter: usize,
    /// Stop once `|X_{k+1} - X_k|_F / |X_k|_F <= rel_tol`.
    pub rel_tol: f64,
    pub track_objective: bool,
    /// Multiply `rho` by this factor after every iteration. Off (`None`) by
    /// default; with it on the objective changes between iterations and is
    /// no longer monotone.
    pub rho_growth: Option<f64>,
}

impl Default for HqsConfig {
    fn default() -> Self {
        Self {
            mu: 0.05,
            nu: 0.001,
            rho: 0.001,
            max_iter: 20,
            rel_tol: 1e-5,
            track_objective: true,
            rho_growth: None,
        }
    }
}

impl HqsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(HsError::InvalidParameter(what));
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be >= 0, got {}", self.mu));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be >= 0, got {}", self.nu));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be > 0, got {}", self.rho));
        }
        if self.max_iter == 0 {
            return bad("iteration cap must be >= 1".into());
        }
        if !(self.rel_tol > 0.0) {
            return bad(format!("rel_tol must be > 0, got {}", self.rel_tol));
        }
        if let Some(g) = self.rho_growth {
            if !(g >= 1.0 && g.is_finite()) {
                return bad(format!("rho growth must be >= 1, got {g}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FusionResult {
    pub x_hat: HsiCube,
    pub v: HsiCube,
    pub iterations: usize,
    /// `L(X_{k+1}, V_{k+1})` after every iteration (empty when tracking is off).
    pub objective_trace: Vec<f64>,
    /// Relative Sylvester residual of every X-step.
    pub sylvester_residuals: Vec<f64>,
    pub x_step_method: Option<SolveMethod>,
    pub converged: bool,
}

/// What one iteration did.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `L(X_{k+1}, V_k)`, when half steps are tracked.
    pub objective_after_x: Option<f64>,
    /// `L(X_{k+1}, V_{k+1})`, when tracked.
    pub objective_after_v: Option<f64>,
    /// `|X_{k+1} - X_k| / |X_k|`; `None` on the first iteration.
    pub relative_change: Option<f64>,
    pub sylvester_residual: f64,
    pub method: SolveMethod,
}

/// Iteration-level access to the splitting scheme.
pub struct HqsSolver<'a> {
    y: &'a HsiCube,
    z: &'a HsiCube,
    model: &'a DegradationModel,
    xt: &'a HsiCube,
    lap: SpatialGradOp,
    cfg: HqsConfig,
    rho: f64,
    x: Option<HsiCube>,
    v: HsiCube,
    iteration: usize,
    half_steps: bool,
}

impl<'a> HqsSolver<'a> {
    pub fn new(
        y: &'a HsiCube,
        z: &'a HsiCube,
        model: &'a DegradationModel,
        xt: &'a HsiCube,
        cfg: HqsConfig,
    ) -> Result<Self> {
        let lap = SpatialGradOp::laplacian(model.blur.height(), model.blur.width())?;
        Self::with_regularizer(y, z, model, xt, cfg, lap)
    }

    pub fn with_regularizer(
        y: &'a HsiCube,
        z: &'a HsiCube,
        model: &'a DegradationModel,
        xt: &'a HsiCube,
        cfg: HqsConfig,
        lap: SpatialGradOp,
    ) -> Result<Self> {
        cfg.validate()?;
        model.check_hr(xt)?;
        y.check_dims(model.lr_dims()?)?;
        z.check_dims(model.rgb_dims())?;
        Ok(Self {
            y,
            z,
            model,
            xt,
            lap,
            rho: cfg.rho,
            cfg,
            x: None,
            v: xt.clone(),
            iteration: 0,
            half_steps: false,
        })
    }

    /// Also evaluate the objective between the X-step and the V-step.
    pub fn track_half_steps(mut self, on: bool) -> Self {
        self.half_steps = on;
        self
    }

    pub fn x(&self) -> Option<&HsiCube> {
        self.x.as_ref()
    }

    pub fn v(&self) -> &HsiCube {
        &self.v
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Augmented Lagrangian at `(x, v)` with the current `rho`.
    pub fn objective(&self, x: &HsiCube, v: &HsiCube) -> Result<f64> {
        let cfg = HqsConfig {
            rho: self.rho,
            ..self.cfg.clone()
        };
        objective_with(x, v, self.y, self.z, self.model, self.xt, &cfg, &self.lap)
    }

    /// One X-step followed by one V-step.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let sys = build_system(self.model, self.y, self.z, &self.v, self.rho)?;
        let sol = solve(&sys, self.x.as_ref())?;
        if !sol.converged {
            log::warn!(
                "X-step did not reach tolerance (residual {:e})",
                sol.residual
            );
        }
        let x_next = sol.x;

        let track = self.cfg.track_objective;
        let objective_after_x = if track && self.half_steps {
            Some(self.objective(&x_next, &self.v)?)
        } else {
            None
        };

        let v_next = vstep(
            &x_next,
            self.xt,
            &self.lap,
            self.cfg.mu / self.rho,
            self.cfg.nu / self.rho,
        )?;
        let objective_after_v = if track {
            Some(self.objective(&x_next, &v_next)?)
        } else {
            None
        };

        let relative_change = match &self.x {
            Some(prev) => Some(x_next.sub(prev)?.norm() / prev.norm().max(f64::MIN_POSITIVE)),
            None => None,
        };
        if let Some(obj) = objective_after_v {
            if !obj.is_finite() {
                return Err(HsError::Numerical(format!(
                    "objective became non-finite at iteration {}",
                    self.iteration + 1
                )));
            }
        }

        self.x = Some(x_next);
        self.v = v_next;
        self.iteration += 1;
        if let Some(g) = self.cfg.rho_growth {
            self.rho *= g;
        }
        Ok(IterationRecord {
            iteration: self.iteration,
            objective_after_x,
            objective_after_v,
            relative_change,
            sylvester_residual: sol.residual,
            method: sol.method,
        })
    }

    /// Run until the iteration cap or the relative-change criterion.
    pub fn run(self) -> Result<FusionResult> {
        self.run_observed(|_| {})
    }

    /// Like [`HqsSolver::run`], calling `observe` after every iteration.
    pub fn run_observed(
        mut self,
        mut observe: impl FnMut(&IterationRecord),
    ) -> Result<FusionResult> {
        let mut trace = Vec::new();
        let mut residuals = Vec::new();
        let mut method = None;
        let mut converged = false;
        while self.iteration < self.cfg.max_iter {
            let rec = self.step()?;
            observe(&rec);
            log::debug!(
                "iteration {}: objective {:?}, change {:?}",
                rec.iteration,
                rec.objective_after_v,
                rec.relative_change
            );
            trace.extend(rec.objective_after_v);
            residuals.push(rec.sylvester_residual);
            method = Some(rec.method);
            if rec.relative_change.is_some_and(|c| c <= self.cfg.rel_tol) {
                converged = true;
                break;
            }
        }
        Ok(FusionResult {
            x_hat: self.x.expect("at least one iteration"),
            v: self.v,
            iterations: self.iteration,
            objective_trace: trace,
            sylvester_residuals: residuals,
            x_step_method: method,
            converged,
        })
    }
}

/// `fuse`: estimate the high-resolution cube from `(Y, Z)` and a prior.
pub fn fuse(
    y: &HsiCube,
    z: &HsiCube,
    model: &DegradationModel,
    xt: &HsiCube,
    cfg: &HqsConfig,
) -> Result<FusionResult> {
    HqsSolver::new(y, z, model, xt, cfg.clone())?.run()
}

/// `objective_value`: the augmented Lagrangian with the Laplacian regularizer.
pub fn objective_value(
    x: &HsiCube,
    v: &HsiCube,
    y: &HsiCube,
    z: &HsiCube,
    model: &DegradationModel,
    xt: &HsiCube,
    cfg: &HqsConfig,
) -> Result<f64> {
    let lap = SpatialGradOp::laplacian(model.blur.height(), model.blur.width())?;
    objective_with(x, v, y, z, model, xt, cfg, &lap)
}

#[allow(clippy::too_many_arguments)]
fn objective_with(
    x: &HsiCube,
    v: &HsiCube,
    y: &HsiCube,
    z: &HsiCube,
    model: &DegradationModel,
    xt: &HsiCube,
    cfg: &HqsConfig,
    lap: &SpatialGradOp,
) -> Result<f64> {
    model.check_hr(x)?;
    model.check_hr(v)?;
    let (fy, fz) = data_residuals(x, y, z, model)?;
    let split = x.sub(v)?.norm_sq();
    let reg = regularizer_value(v, xt, lap, cfg.mu, cfg.nu)?;
    Ok(fy + fz + cfg.rho * split + reg)
}

/// Squared data misfits `(|Y - SBX|^2, |Z - RX|^2)`.
pub fn data_residuals(
    x: &HsiCube,
    y: &HsiCube,
    z: &HsiCube,
    model: &DegradationModel,
) -> Result<(f64, f64)> {
    let fy = y.sub(&model.spatial(x)?)?.norm_sq();
    let fz = z.sub(&model.srf.apply(x)?)?.norm_sq();
    Ok((fy, fz))
}
