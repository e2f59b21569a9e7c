//! Closed-form scalars of the Ornstein-Uhlenbeck forward kernel and of the
//! one-step Brownian integrals that drive the samplers.
//!
//! Over a step of width `Δ` the pair
//!
//! ```text
//! u = ∫_0^Δ e^{Δ-r} (W_r - W_0) dr,      v = ∫_0^Δ e^{Δ-r} dW_r
//! ```
//!
//! is Gaussian with per-coordinate covariances `Var u = f1(Δ)`,
//! `Var v = f2(Δ)`, `Cov(u, v) = f3(Δ)`. The stochastic Runge-Kutta step
//! represents `(2√2 u / (e^Δ - e^{-Δ}), √2 v)` as `(ζ1 g1, ζ2 g1 + ζ3 g3)`
//! with independent standard normals `g1, g3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible step width.
pub const MAX_STEP: f64 = 0.25;

/// Below this width `f1..f3` are evaluated from their Taylor series.
pub const SERIES_CROSSOVER: f64 = 0.1;

/// Roundoff allowance on the `ζ3` radicand.
pub const RADICAND_TOLERANCE: f64 = 1e-14;

const SERIES_TERMS: i32 = 30;

/// Signal and noise coefficients of the forward marginal `λ_t X_0 + σ_t Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelScalars {
    pub lambda: f64,
    pub sigma: f64,
}

impl KernelScalars {
    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn lambda_sq(&self) -> f64 {
        self.lambda * self.lambda
    }
}

/// `(e^{-t}, √(1 - e^{-2t}))`, with `1 - e^{-2t}` evaluated through `expm1`.
pub fn kernel_scalars(t: f64) -> KernelScalars {
    debug_assert!(t >= 0.0, "negative forward time {t}");
    KernelScalars {
        lambda: (-t).exp(),
        sigma: (-(-2.0 * t).exp_m1()).sqrt(),
    }
}

/// Covariance scalars of the one-step Brownian integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceScalars {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

pub fn covariance_functions(delta: f64) -> Result<CovarianceScalars> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Invalid(format!("step width must be positive, got {delta}")));
    }
    if delta < SERIES_CROSSOVER {
        Ok(covariance_series(delta))
    } else {
        Ok(covariance_closed_form(delta))
    }
}

/// Closed forms. `f2` and `f3` are rewritten through `expm1` and carry no
/// cancellation; `f1 = f3 - (e^Δ - Δ - 1)` loses roughly `log10(3/Δ)` digits.
pub fn covariance_closed_form(delta: f64) -> CovarianceScalars {
    let em1 = delta.exp_m1();
    let f2 = 0.5 * (2.0 * delta).exp_m1();
    let f3 = 0.5 * em1 * em1;
    let f1 = f3 - (em1 - delta);
    CovarianceScalars { f1, f2, f3 }
}

/// Taylor series in `Δ`:
/// `f1 = Σ_{n≥3} (2^{n-1} - 2) Δ^n/n!`, `f2 = Σ_{n≥1} 2^{n-1} Δ^n/n!`,
/// `f3 = Σ_{n≥2} (2^{n-1} - 1) Δ^n/n!`.
pub fn covariance_series(delta: f64) -> CovarianceScalars {
    let mut powers = [0.0f64; SERIES_TERMS as usize + 1];
    let mut p = 1.0;
    for (n, slot) in powers.iter_mut().enumerate() {
        if n > 0 {
            p *= delta / n as f64;
        }
        *slot = p;
    }
    let (mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0);
    // smallest terms first
    for n in (1..=SERIES_TERMS).rev() {
        let two_pow = 2f64.powi(n - 1);
        let pn = powers[n as usize];
        f2 += two_pow * pn;
        if n >= 2 {
            f3 += (two_pow - 1.0) * pn;
        }
        if n >= 3 {
            f1 += (two_pow - 2.0) * pn;
        }
    }
    CovarianceScalars { f1, f2, f3 }
}

/// Per-step coefficients of the stochastic Runge-Kutta update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub delta: f64,
    /// `e^{-2Δ}`
    pub alpha: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

impl CoefficientSet {
    /// `1/√α = e^Δ`.
    pub fn inv_sqrt_alpha(&self) -> f64 {
        self.delta.exp()
    }

    /// `1 - α`, computed without cancellation.
    pub fn one_minus_alpha(&self) -> f64 {
        -(-2.0 * self.delta).exp_m1()
    }

    /// `(1 - α)/√α = e^Δ - e^{-Δ}`.
    pub fn drift_scale(&self) -> f64 {
        2.0 * self.delta.sinh()
    }
}

pub fn coefficients(delta: f64) -> Result<CoefficientSet> {
    if !(delta > 0.0 && delta <= MAX_STEP) {
        return Err(Error::StepOutOfRange(delta));
    }
    let CovarianceScalars { f1, f2, f3 } = covariance_functions(delta)?;
    let spread = 2.0 * delta.sinh();
    let sqrt_f1 = f1.sqrt();
    let zeta1 = 2.0 * std::f64::consts::SQRT_2 * sqrt_f1 / spread;
    let zeta2 = std::f64::consts::SQRT_2 * f3 / sqrt_f1;
    let mut radicand = 2.0 * f2 - 2.0 * f3 * f3 / f1;
    if radicand < 0.0 {
        if radicand < -RADICAND_TOLERANCE {
            return Err(Error::NegativeRadicand(radicand));
        }
        radicand = 0.0;
    }
    Ok(CoefficientSet {
        delta,
        alpha: (-2.0 * delta).exp(),
        zeta1,
        zeta2,
        zeta3: radicand.sqrt(),
        f1,
        f2,
        f3,
    })
}

/// Per-coordinate covariance of `(ζ1 g1, ζ2 g1 + ζ3 g3)`.
pub fn joint_noise_covariance(delta: f64) -> Result<[[f64; 2]; 2]> {
    let c = coefficients(delta)?;
    let off = c.zeta1 * c.zeta2;
    Ok([
        [c.zeta1 * c.zeta1, off],
        [off, c.zeta2 * c.zeta2 + c.zeta3 * c.zeta3],
    ])
}

/// Coefficients computed once per step of a grid and indexed by step.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    sets: Vec<CoefficientSet>,
}

impl CoefficientTable {
    pub fn from_widths(widths: &[f64]) -> Result<Self> {
        let mut sets: Vec<CoefficientSet> = Vec::with_capacity(widths.len());
        for &w in widths {
            // consecutive equal widths share one evaluation
            match sets.last() {
                Some(prev) if prev.delta == w => sets.push(*prev),
                _ => sets.push(coefficients(w)?),
            }
        }
        Ok(Self { sets })
    }

    pub fn get(&self, step: usize) -> &CoefficientSet {
        &self.sets[step]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CoefficientSet> {
        self.sets.iter()
    }
}
