//! Discretization grids `0 = t_0 < t_1 < … < t_K = T - δ` in reverse time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_scalars, MAX_STEP};

/// Default hard cap on the number of steps of a generated grid.
pub const DEFAULT_MAX_STEPS: usize = 10_000_000;

/// Relative slack applied to the step-size envelope check. The geometric part
/// of the backward recursion sits exactly on the envelope in real arithmetic.
pub const ENVELOPE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub d: usize,
    pub eps: f64,
    pub delta_stop: f64,
    #[serde(default)]
    pub kappa_override: Option<f64>,
    #[serde(default)]
    pub horizon_override: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

impl ScheduleParams {
    pub fn new(d: usize, eps: f64, delta_stop: f64) -> Self {
        Self {
            d,
            eps,
            delta_stop,
            kappa_override: None,
            horizon_override: None,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    /// `T = ½ log(d/ε²)` unless overridden.
    pub fn horizon(&self) -> f64 {
        self.horizon_override
            .unwrap_or_else(|| 0.5 * (self.d as f64 / (self.eps * self.eps)).ln())
    }

    /// `κ = min{ε/(d^{3/2} T^{1/2}), 1/d², 1/4}` unless overridden.
    pub fn kappa(&self) -> f64 {
        if let Some(k) = self.kappa_override {
            return k;
        }
        let d = self.d as f64;
        let t = self.horizon();
        (self.eps / (d.powf(1.5) * t.sqrt()))
            .min(1.0 / (d * d))
            .min(MAX_STEP)
    }

    pub fn check(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Schedule("dimension must be positive".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Schedule(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.delta_stop > 0.0 && self.delta_stop < 0.5) {
            return Err(Error::Schedule(format!(
                "early-stopping gap must lie in (0, 0.5), got {}",
                self.delta_stop
            )));
        }
        if let Some(k) = self.kappa_override {
            if !(k > 0.0 && k <= MAX_STEP) {
                return Err(Error::Schedule(format!("kappa must lie in (0, 0.25], got {k}")));
            }
        }
        let t = self.horizon();
        if !(t > self.delta_stop) || !t.is_finite() {
            return Err(Error::Schedule(format!(
                "horizon T = {t} must exceed the early-stopping gap {}",
                self.delta_stop
            )));
        }
        let k = self.kappa();
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Schedule(format!("degenerate kappa {k}")));
        }
        Ok(())
    }
}

/// Reverse-time grid. `times[0] = 0` and `times[K] = T - δ` hold exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "delta")]
    pub delta_stop: f64,
    pub kappa: f64,
    pub times: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from explicit times, checking the structural invariants.
    pub fn from_times(horizon: f64, delta_stop: f64, kappa: f64, times: Vec<f64>) -> Result<Self> {
        let grid = Self { horizon, delta_stop, kappa, times };
        grid.check()?;
        Ok(grid)
    }

    pub fn check(&self) -> Result<()> {
        if self.times.len() < 2 {
            return Err(Error::Schedule("grid needs at least one step".into()));
        }
        if self.times[0] != 0.0 {
            return Err(Error::Schedule("grid must start at t_0 = 0".into()));
        }
        if *self.times.last().unwrap() != self.horizon - self.delta_stop {
            return Err(Error::Schedule("grid must end at t_K = T - delta".into()));
        }
        if !(self.delta_stop > 0.0) {
            return Err(Error::Schedule("early-stopping gap must be positive".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Schedule("grid times must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn width(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn end(&self) -> f64 {
        self.times[self.steps()]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s)?;
        g.check()?;
        Ok(g)
    }
}

/// Backward step recursion started from `Δ_{K-1} = κδ²`:
/// `Δ_{k-1} = min{κ, Δ_k (1 + √(κ Δ_k))²}`, clamped so that `t_0 = 0`.
pub fn build_corollary_grid(params: &ScheduleParams) -> Result<TimeGrid> {
    params.check()?;
    let horizon = params.horizon();
    let kappa = params.kappa();
    let delta = params.delta_stop;
    let span = horizon - delta;

    // widths listed from the last step backwards
    let mut backward = Vec::new();
    let mut covered = 0.0;
    let mut width = kappa * delta * delta;
    loop {
        if backward.len() >= params.max_steps {
            return Err(Error::Schedule(format!(
                "step count exceeds the cap of {}",
                params.max_steps
            )));
        }
        let remaining = span - covered;
        if width >= remaining {
            if remaining > 1e-12 * span {
                backward.push(remaining);
            } else if let Some(last) = backward.last_mut() {
                *last += remaining;
            } else {
                backward.push(remaining);
            }
            break;
        }
        backward.push(width);
        covered += width;
        width = kappa.min(width * (1.0 + (kappa * width).sqrt()).powi(2));
    }

    let k = backward.len();
    let mut times = vec![0.0; k + 1];
    times[k] = span;
    for (i, w) in backward.iter().enumerate() {
        let idx = k - 1 - i;
        times[idx] = times[idx + 1] - w;
    }
    times[0] = 0.0;
    if k >= 2 && !(times[1] > 0.0) {
        // leftover clamp below roundoff, fold it into the next step
        times.remove(1);
    }
    TimeGrid::from_times(horizon, delta, kappa, times)
}

/// `t_k = k (T - δ)/K`; `kappa` records the common width.
pub fn build_uniform_grid(horizon: f64, steps: usize, delta_stop: f64) -> Result<TimeGrid> {
    if steps == 0 {
        return Err(Error::Schedule("uniform grid needs K >= 1".into()));
    }
    if !(delta_stop > 0.0 && horizon > delta_stop) {
        return Err(Error::Schedule(format!(
            "need T > delta > 0, got T = {horizon}, delta = {delta_stop}"
        )));
    }
    let span = horizon - delta_stop;
    let width = span / steps as f64;
    if width > MAX_STEP {
        return Err(Error::Schedule(format!("uniform width {width} exceeds {MAX_STEP}")));
    }
    let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * span / steps as f64).collect();
    times[steps] = span;
    TimeGrid::from_times(horizon, delta_stop, width, times)
}

/// Per-step outcome of the step-size conditions on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `Δ_k ≤ κ min{1, (T - t_{k+1})²}`
    pub envelope: Vec<bool>,
    /// `1.3Δ_k + (53Δ_k + 10Δ_k²)(σ⁻² + λ²σ⁻⁴) d ≤ ½` at `T - t_k`
    pub smallness: Vec<bool>,
    /// `κ d² ≤ 1`
    pub kappa_dimension: bool,
    pub first_envelope_violation: Option<usize>,
    pub first_smallness_violation: Option<usize>,
    pub max_smallness_lhs: f64,
}

impl ValidationReport {
    pub fn envelope_ok(&self) -> bool {
        self.first_envelope_violation.is_none()
    }

    pub fn smallness_ok(&self) -> bool {
        self.first_smallness_violation.is_none()
    }

    /// The envelope and dimension conditions, which the generated schedules
    /// are built to satisfy.
    pub fn required_ok(&self) -> bool {
        self.envelope_ok() && self.kappa_dimension
    }

    pub fn all_ok(&self) -> bool {
        self.required_ok() && self.smallness_ok()
    }
}

pub fn smallness_lhs(width: f64, tau: f64, d: usize) -> f64 {
    let ks = kernel_scalars(tau);
    let s2 = ks.sigma_sq();
    let curvature = 1.0 / s2 + ks.lambda_sq() / (s2 * s2);
    1.3 * width + (53.0 * width + 10.0 * width * width) * curvature * d as f64
}

pub fn validate_assumptions(grid: &TimeGrid, d: usize) -> ValidationReport {
    let horizon = grid.horizon;
    let kappa = grid.kappa;
    let mut envelope = Vec::with_capacity(grid.steps());
    let mut smallness = Vec::with_capacity(grid.steps());
    let mut max_lhs = 0.0f64;
    for k in 0..grid.steps() {
        let w = grid.width(k);
        let gap = horizon - grid.times[k + 1];
        let bound = kappa * gap.powi(2).min(1.0);
        envelope.push(w <= bound * (1.0 + ENVELOPE_SLACK));
        let lhs = smallness_lhs(w, horizon - grid.times[k], d);
        max_lhs = max_lhs.max(lhs);
        smallness.push(lhs <= 0.5);
    }
    let dd = d as f64;
    ValidationReport {
        first_envelope_violation: envelope.iter().position(|ok| !ok),
        first_smallness_violation: smallness.iter().position(|ok| !ok),
        envelope,
        smallness,
        kappa_dimension: kappa * dd * dd <= 1.0,
        max_smallness_lhs: max_lhs,
    }
}

/// Upper bound `C [(κδ)⁻¹ log(1 + 1/δ) + T/κ]` on the step count, `C = 10`.
pub fn step_count_bound(horizon: f64, kappa: f64, delta_stop: f64) -> f64 {
    10.0 * ((1.0 + 1.0 / delta_stop).ln() / (kappa * delta_stop) + horizon / kappa)
}
