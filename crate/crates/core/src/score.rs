//! Score fields `s(t, x) = ∇ log q_{T-t}(x)` in reverse time.
//!
//! Analytic targets are evaluated through their posterior mean
//! `m(t, x) = E[θ | λθ + σg = x]` (with `λ, σ` taken at forward time `T - t`)
//! and the identity `s = (λ m - x)/σ²`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_scalars, KernelScalars};
use crate::linalg::Operator;

const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Gaussian with diagonal covariance (entries may be zero).
    Gaussian { mean: Vec<f64>, cov: Vec<f64> },
    /// Weighted atoms. `bounded` asserts `‖θ_i‖₂ ≤ √d`.
    #[serde(rename = "finite")]
    FinitePointSet {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
        #[serde(default)]
        bounded: bool,
    },
    /// Isotropic Gaussian components with a shared variance.
    #[serde(rename = "mixture")]
    GaussianMixture {
        means: Vec<Vec<f64>>,
        weights: Vec<f64>,
        component_var: f64,
    },
}

fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Target("no weights".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Target("weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::Target(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

fn check_points(points: &[Vec<f64>], n: usize) -> Result<usize> {
    if points.len() != n {
        return Err(Error::Target(format!("{} points but {n} weights", points.len())));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::Target("zero-dimensional points".into()));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::Dimension { expected: d, got: p.len() });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Target("non-finite coordinate".into()));
        }
    }
    Ok(d)
}

impl TargetSpec {
    pub fn gaussian(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let t = TargetSpec::Gaussian { mean, cov };
        t.validate()?;
        Ok(t)
    }

    pub fn isotropic_gaussian(d: usize, mean: f64, var: f64) -> Result<Self> {
        Self::gaussian(vec![mean; d], vec![var; d])
    }

    pub fn finite(atoms: Vec<Vec<f64>>, weights: Vec<f64>, bounded: bool) -> Result<Self> {
        let t = TargetSpec::FinitePointSet { atoms, weights, bounded };
        t.validate()?;
        Ok(t)
    }

    pub fn mixture(means: Vec<Vec<f64>>, weights: Vec<f64>, component_var: f64) -> Result<Self> {
        let t = TargetSpec::GaussianMixture { means, weights, component_var };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TargetSpec::Gaussian { mean, cov } => {
                if mean.is_empty() {
                    return Err(Error::Target("empty mean".into()));
                }
                if mean.len() != cov.len() {
                    return Err(Error::Dimension { expected: mean.len(), got: cov.len() });
                }
                if cov.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
                    return Err(Error::Target("covariance entries must be nonnegative".into()));
                }
                if mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::Target("non-finite mean".into()));
                }
            }
            TargetSpec::FinitePointSet { atoms, weights, bounded } => {
                check_simplex(weights)?;
                let d = check_points(atoms, weights.len())?;
                if *bounded {
                    let r = (d as f64).sqrt();
                    for a in atoms {
                        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n > r * (1.0 + 1e-12) {
                            return Err(Error::Target(format!(
                                "atom norm {n} exceeds the support radius {r}"
                            )));
                        }
                    }
                }
            }
            TargetSpec::GaussianMixture { means, weights, component_var } => {
                check_simplex(weights)?;
                check_points(means, weights.len())?;
                if !(*component_var > 0.0) || !component_var.is_finite() {
                    return Err(Error::Target("component variance must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Gaussian { mean, .. } => mean.len(),
            TargetSpec::FinitePointSet { atoms, .. } => atoms[0].len(),
            TargetSpec::GaussianMixture { means, .. } => means[0].len(),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, TargetSpec::Gaussian { .. })
    }

    /// `√d` when bounded support is asserted.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            TargetSpec::FinitePointSet { bounded: true, atoms, .. } => {
                Some((atoms[0].len() as f64).sqrt())
            }
            _ => None,
        }
    }

    /// Mean of `q_0`.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            TargetSpec::Gaussian { mean, .. } => mean.clone(),
            TargetSpec::FinitePointSet { atoms: pts, weights, .. }
            | TargetSpec::GaussianMixture { means: pts, weights, .. } => {
                let mut m = vec![0.0; pts[0].len()];
                for (p, w) in pts.iter().zip(weights) {
                    for (mi, pi) in m.iter_mut().zip(p) {
                        *mi += w * pi;
                    }
                }
                m
            }
        }
    }

    /// One draw from `q_τ = law(λ_τ θ + σ_τ z)`, `θ ~ q_0`.
    pub fn sample_forward<R: Rng + ?Sized>(&self, tau: f64, rng: &mut R) -> Vec<f64> {
        let ks = kernel_scalars(tau);
        match self {
            TargetSpec::Gaussian { mean, cov } => mean
                .iter()
                .zip(cov)
                .map(|(m, c)| {
                    let theta = m + c.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    ks.lambda * theta + ks.sigma * rng.sample::<f64, _>(StandardNormal)
                })
                .collect(),
            TargetSpec::FinitePointSet { atoms, weights, .. } => {
                let idx = pick(weights, rng.random::<f64>());
                atoms[idx]
                    .iter()
                    .map(|a| ks.lambda * a + ks.sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            TargetSpec::GaussianMixture { means, weights, component_var } => {
                let idx = pick(weights, rng.random::<f64>());
                let sd = component_var.sqrt();
                means[idx]
                    .iter()
                    .map(|m| {
                        let theta = m + sd * rng.sample::<f64, _>(StandardNormal);
                        ks.lambda * theta + ks.sigma * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            }
        }
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Exactly affine score `s(t, x) = G x + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScore {
    pub g: Operator,
    pub h: DVector<f64>,
}

pub trait ScoreField: Send + Sync {
    fn dim(&self) -> usize;

    /// Horizon `T`; reverse time ranges over `[0, T)`.
    fn horizon(&self) -> f64;

    fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(t, x, &mut out)?;
        Ok(out)
    }

    /// `Some` only when the field is exactly affine in `x` at time `t`.
    fn linearization(&self, _t: f64) -> Option<LinearScore> {
        None
    }

    /// Support radius asserted by the underlying target, if any.
    fn support_radius(&self) -> Option<f64> {
        None
    }
}

macro_rules! forward_score_field {
    ($($ty:ty),*) => {$(
        impl<F: ScoreField + ?Sized> ScoreField for $ty {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn horizon(&self) -> f64 {
                (**self).horizon()
            }
            fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
                (**self).score_into(t, x, out)
            }
            fn linearization(&self, t: f64) -> Option<LinearScore> {
                (**self).linearization(t)
            }
            fn support_radius(&self) -> Option<f64> {
                (**self).support_radius()
            }
        }
    )*};
}

forward_score_field!(Box<F>, Arc<F>, &F);

/// Forward-kernel scalars at `T - t`, rejecting `t ∉ [0, T)`.
pub fn reverse_kernel(t: f64, horizon: f64) -> Result<KernelScalars> {
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    let ks = kernel_scalars(horizon - t);
    if !(ks.sigma > 0.0) {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    Ok(ks)
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// Ground-truth score of an analytic target.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticScore {
    target: TargetSpec,
    horizon: f64,
}

impl AnalyticScore {
    pub fn new(target: TargetSpec, horizon: f64) -> Result<Self> {
        target.validate()?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { target, horizon })
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }

    pub fn posterior_mean(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut m = vec![0.0; self.dim()];
        self.posterior_mean_into(t, x, &mut m)?;
        Ok(m)
    }

    pub fn posterior_mean_into(&self, t: f64, x: &[f64], m: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let ks = reverse_kernel(t, self.horizon)?;
        let (lam, s2) = (ks.lambda, ks.sigma_sq());
        match &self.target {
            TargetSpec::Gaussian { mean, cov } => {
                for i in 0..x.len() {
                    let v = lam * lam * cov[i] + s2;
                    m[i] = (cov[i] * lam * x[i] + s2 * mean[i]) / v;
                }
            }
            TargetSpec::FinitePointSet { atoms, weights, .. } => {
                let logits: Vec<f64> = atoms
                    .iter()
                    .zip(weights)
                    .map(|(a, w)| {
                        let dot: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
                        let sq: f64 = a.iter().map(|ai| ai * ai).sum();
                        w.ln() + lam * dot / s2 - lam * lam * sq / (2.0 * s2)
                    })
                    .collect();
                let probs = softmax(&logits);
                m.iter_mut().for_each(|v| *v = 0.0);
                for (a, p) in atoms.iter().zip(&probs) {
                    for (mi, ai) in m.iter_mut().zip(a) {
                        *mi += p * ai;
                    }
                }
            }
            TargetSpec::GaussianMixture { means, weights, component_var } => {
                let c = *component_var;
                let v = lam * lam * c + s2;
                let logits: Vec<f64> = means
                    .iter()
                    .zip(weights)
                    .map(|(mu, w)| {
                        let sq: f64 = mu.iter().zip(x).map(|(mi, xi)| (xi - lam * mi).powi(2)).sum();
                        w.ln() - sq / (2.0 * v)
                    })
                    .collect();
                let probs = softmax(&logits);
                m.iter_mut().for_each(|v| *v = 0.0);
                let gain = c * lam / v;
                for (mu, p) in means.iter().zip(&probs) {
                    for ((mi, muj), xi) in m.iter_mut().zip(mu).zip(x) {
                        *mi += p * (muj + gain * (xi - lam * muj));
                    }
                }
            }
        }
        Ok(())
    }

    /// `-(λ²Σ₀ + σ²I)⁻¹(x - λμ)` for Gaussian targets.
    pub fn gaussian_direct_score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let TargetSpec::Gaussian { mean, cov } = &self.target else {
            return Err(Error::Target("direct linear score needs a Gaussian target".into()));
        };
        check_dim(self.dim(), x.len())?;
        let ks = reverse_kernel(t, self.horizon)?;
        let (lam, s2) = (ks.lambda, ks.sigma_sq());
        Ok((0..x.len())
            .map(|i| -(x[i] - lam * mean[i]) / (lam * lam * cov[i] + s2))
            .collect())
    }

    /// `log q_{T-t}(x)` by direct summation over atoms or components.
    pub fn log_density(&self, t: f64, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let ks = reverse_kernel(t, self.horizon)?;
        let (lam, s2) = (ks.lambda, ks.sigma_sq());
        let log_normal = |centre: &[f64], var: &[f64]| -> f64 {
            centre
                .iter()
                .zip(var)
                .zip(x)
                .map(|((c, v), xi)| -0.5 * ((xi - c).powi(2) / v + (2.0 * PI * v).ln()))
                .sum()
        };
        let d = x.len();
        let logsumexp = |terms: Vec<f64>| {
            let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        };
        match &self.target {
            TargetSpec::Gaussian { mean, cov } => {
                let centre: Vec<f64> = mean.iter().map(|m| lam * m).collect();
                let var: Vec<f64> = cov.iter().map(|c| lam * lam * c + s2).collect();
                Ok(log_normal(&centre, &var))
            }
            TargetSpec::FinitePointSet { atoms, weights, .. } => {
                let var = vec![s2; d];
                Ok(logsumexp(
                    atoms
                        .iter()
                        .zip(weights)
                        .map(|(a, w)| {
                            let centre: Vec<f64> = a.iter().map(|v| lam * v).collect();
                            w.ln() + log_normal(&centre, &var)
                        })
                        .collect(),
                ))
            }
            TargetSpec::GaussianMixture { means, weights, component_var } => {
                let var = vec![lam * lam * component_var + s2; d];
                Ok(logsumexp(
                    means
                        .iter()
                        .zip(weights)
                        .map(|(m, w)| {
                            let centre: Vec<f64> = m.iter().map(|v| lam * v).collect();
                            w.ln() + log_normal(&centre, &var)
                        })
                        .collect(),
                ))
            }
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

impl ScoreField for AnalyticScore {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.posterior_mean_into(t, x, out)?;
        let ks = reverse_kernel(t, self.horizon)?;
        let s2 = ks.sigma_sq();
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (ks.lambda * *o - xi) / s2;
        }
        Ok(())
    }

    fn linearization(&self, t: f64) -> Option<LinearScore> {
        let TargetSpec::Gaussian { mean, cov } = &self.target else {
            return None;
        };
        let ks = reverse_kernel(t, self.horizon).ok()?;
        let (lam, s2) = (ks.lambda, ks.sigma_sq());
        let inv: Vec<f64> = cov.iter().map(|c| 1.0 / (lam * lam * c + s2)).collect();
        Some(LinearScore {
            g: Operator::Diag(DVector::from_iterator(inv.len(), inv.iter().map(|v| -v))),
            h: DVector::from_iterator(inv.len(), inv.iter().zip(mean).map(|(v, m)| v * lam * m)),
        })
    }

    fn support_radius(&self) -> Option<f64> {
        self.target.support_radius()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    #[default]
    None,
    AdditiveFixedDirection,
    AdditiveRandomSmooth,
}

/// Injected score error: `‖ŝ - s‖₂ = magnitude` at every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PerturbationSpec {
    #[serde(default)]
    pub kind: PerturbationKind,
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(kind: PerturbationKind, magnitude: f64, seed: u64) -> Self {
        Self { kind, magnitude, seed }
    }
}

const SMOOTH_FEATURES: usize = 8;

#[derive(Debug, Clone)]
struct Feature {
    freq: Vec<f64>,
    time_freq: f64,
    phase: f64,
    amplitude: Vec<f64>,
}

/// `ŝ = s + e` with `e` a deterministic function of `(t, x, seed)`.
#[derive(Debug, Clone)]
pub struct PerturbedScore<F> {
    base: F,
    spec: PerturbationSpec,
    direction: Vec<f64>,
    features: Vec<Feature>,
}

impl<F: ScoreField> PerturbedScore<F> {
    pub fn new(base: F, spec: PerturbationSpec) -> Result<Self> {
        if !(spec.magnitude >= 0.0) || !spec.magnitude.is_finite() {
            return Err(Error::Invalid(format!(
                "perturbation magnitude must be nonnegative, got {}",
                spec.magnitude
            )));
        }
        let d = base.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut direction: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        direction.iter_mut().for_each(|v| *v /= n);
        let features = (0..SMOOTH_FEATURES)
            .map(|_| Feature {
                freq: (0..d).map(|_| rng.sample(StandardNormal)).collect(),
                time_freq: rng.sample(StandardNormal),
                phase: rng.random::<f64>() * std::f64::consts::TAU,
                amplitude: (0..d).map(|_| rng.sample(StandardNormal)).collect(),
            })
            .collect();
        Ok(Self { base, spec, direction, features })
    }

    pub fn spec(&self) -> &PerturbationSpec {
        &self.spec
    }

    pub fn base(&self) -> &F {
        &self.base
    }

    /// The injected error `e(t, x)`.
    pub fn error_at(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let d = self.direction.len();
        match self.spec.kind {
            PerturbationKind::None => vec![0.0; d],
            PerturbationKind::AdditiveFixedDirection => {
                self.direction.iter().map(|u| self.spec.magnitude * u).collect()
            }
            PerturbationKind::AdditiveRandomSmooth => {
                let mut v = vec![0.0; d];
                for f in &self.features {
                    let arg: f64 = f.freq.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
                        + f.time_freq * t
                        + f.phase;
                    let c = arg.cos();
                    for (vi, a) in v.iter_mut().zip(&f.amplitude) {
                        *vi += a * c;
                    }
                }
                let n = v.iter().map(|e| e * e).sum::<f64>().sqrt();
                if n > 1e-150 {
                    v.iter().map(|e| self.spec.magnitude * e / n).collect()
                } else {
                    self.direction.iter().map(|u| self.spec.magnitude * u).collect()
                }
            }
        }
    }
}

impl<F: ScoreField> ScoreField for PerturbedScore<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn horizon(&self) -> f64 {
        self.base.horizon()
    }

    fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.base.score_into(t, x, out)?;
        if self.spec.kind != PerturbationKind::None && self.spec.magnitude > 0.0 {
            for (o, e) in out.iter_mut().zip(self.error_at(t, x)) {
                *o += e;
            }
        }
        Ok(())
    }

    fn linearization(&self, t: f64) -> Option<LinearScore> {
        match self.spec.kind {
            PerturbationKind::None => self.base.linearization(t),
            PerturbationKind::AdditiveFixedDirection => {
                let mut lin = self.base.linearization(t)?;
                for (h, u) in lin.h.iter_mut().zip(&self.direction) {
                    *h += self.spec.magnitude * u;
                }
                Some(lin)
            }
            PerturbationKind::AdditiveRandomSmooth if self.spec.magnitude == 0.0 => {
                self.base.linearization(t)
            }
            PerturbationKind::AdditiveRandomSmooth => None,
        }
    }

    fn support_radius(&self) -> Option<f64> {
        self.base.support_radius()
    }
}

/// Recovers `m̂ = (σ² ŝ + y)/λ`, projects it onto the ball of the target's
/// support radius and re-encodes `ŝᴾ = (λ P(m̂) - y)/σ²`.
#[derive(Debug, Clone)]
pub struct ProjectedScore<F> {
    base: F,
    radius: f64,
}

impl<F: ScoreField> ProjectedScore<F> {
    pub fn new(base: F) -> Result<Self> {
        let radius = base.support_radius().ok_or_else(|| {
            Error::Target("projection needs a target with asserted bounded support".into())
        })?;
        Ok(Self { base, radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl<F: ScoreField> ScoreField for ProjectedScore<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn horizon(&self) -> f64 {
        self.base.horizon()
    }

    fn score_into(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.base.score_into(t, y, out)?;
        let ks = reverse_kernel(t, self.horizon())?;
        let (lam, s2) = (ks.lambda, ks.sigma_sq());
        let m_hat: Vec<f64> = out.iter().zip(y).map(|(s, yi)| (s2 * s + yi) / lam).collect();
        let norm = m_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= self.radius {
            // already inside the ball; leave ŝ untouched
            return Ok(());
        }
        let shrink = self.radius / norm;
        for ((o, m), yi) in out.iter_mut().zip(&m_hat).zip(y) {
            *o = (lam * shrink * m - yi) / s2;
        }
        Ok(())
    }

    fn support_radius(&self) -> Option<f64> {
        Some(self.radius)
    }
}
