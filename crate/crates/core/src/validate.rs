//! Cross-module invariant battery run by the `validate` subcommand.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::{coefficients, covariance_functions, CoefficientSet};
use crate::linalg::Operator;
use crate::oracle::{affine_of_step, gaussian_kl, q_delta_law, GaussianLaw};
use crate::sampler::{srk_step, SamplerKind};
use crate::schedule::{build_corollary_grid, step_count_bound, validate_assumptions, ScheduleParams};
use crate::score::{
    AnalyticScore, LinearScore, PerturbationKind, PerturbationSpec, PerturbedScore,
    ProjectedScore, ScoreField, TargetSpec,
};

/// Coefficient source under test; `coefficients` in normal runs.
pub type CoefficientFn = fn(f64) -> Result<CoefficientSet>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest observed error or statistic.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} ({} {:.3e}, threshold {:.3e})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail,
            self.measured,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationSuite {
    pub checks: Vec<CheckResult>,
}

impl ValidationSuite {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, measured: f64, threshold: f64, detail: &str) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: measured <= threshold,
        measured,
        threshold,
        detail: detail.into(),
    }
}

fn failed(name: &str, threshold: f64, err: impl fmt::Display) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: false,
        measured: f64::INFINITY,
        threshold,
        detail: format!("error: {err}"),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// `n` log-spaced widths in `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| if i + 1 == n { hi } else { (a + (b - a) * i as f64 / (n - 1) as f64).exp() })
        .collect()
}

fn widths() -> Vec<f64> {
    log_spaced(1e-8, 0.25, 1000)
}

/// `ζ1² = 8f1/s²`, `ζ1ζ2 = 4f3/s`, `ζ2² + ζ3² = 2f2 = e^{2Δ} - 1` with
/// `s = e^Δ - e^{-Δ}`.
pub fn coefficient_identity_error(coeffs: CoefficientFn) -> Result<f64> {
    let mut worst = 0.0f64;
    for delta in widths() {
        let c = coeffs(delta)?;
        let f = covariance_functions(delta)?;
        let s = 2.0 * delta.sinh();
        let two_f2 = (2.0 * delta).exp_m1();
        worst = worst
            .max(rel(c.zeta1 * c.zeta1, 8.0 * f.f1 / (s * s)))
            .max(rel(c.zeta1 * c.zeta2, 4.0 * f.f3 / s))
            .max(rel(c.zeta2 * c.zeta2 + c.zeta3 * c.zeta3, 2.0 * f.f2))
            .max(rel(2.0 * f.f2, two_f2));
    }
    Ok(worst)
}

/// Largest `|ζ_i Δ^{-1/2} - limit_i|` at `Δ`.
pub fn limit_error(coeffs: CoefficientFn, delta: f64) -> Result<f64> {
    let c = coeffs(delta)?;
    let r = delta.sqrt();
    let limits = [(2.0f64 / 3.0).sqrt(), 1.5f64.sqrt(), 0.5f64.sqrt()];
    Ok([c.zeta1, c.zeta2, c.zeta3]
        .iter()
        .zip(limits)
        .map(|(z, l)| (z / r - l).abs())
        .fold(0.0, f64::max))
}

/// Relative Frobenius error between the per-coordinate covariance of the two
/// injected noises `(ζ1 g1, ζ2 g1 + ζ3 g3)` and the one rebuilt from
/// `f1, f2, f3`.
pub fn covariance_reconstruction_error(coeffs: CoefficientFn) -> Result<f64> {
    let mut worst = 0.0f64;
    for delta in widths() {
        let c = coeffs(delta)?;
        let f = covariance_functions(delta)?;
        let s = 2.0 * delta.sinh();
        let built = [
            c.zeta1 * c.zeta1,
            c.zeta1 * c.zeta2,
            c.zeta2 * c.zeta2 + c.zeta3 * c.zeta3,
        ];
        let exact = [8.0 * f.f1 / (s * s), 4.0 * f.f3 / s, 2.0 * f.f2];
        let diff = (built[0] - exact[0]).powi(2) + 2.0 * (built[1] - exact[1]).powi(2) + (built[2] - exact[2]).powi(2);
        let norm = exact[0].powi(2) + 2.0 * exact[1].powi(2) + exact[2].powi(2);
        worst = worst.max((diff / norm).sqrt());
    }
    Ok(worst)
}

/// Most negative normalized determinant of `[[f1, f3], [f3, f2]]`.
pub fn noise_psd_defect() -> Result<f64> {
    let mut worst = 0.0f64;
    for delta in widths() {
        let f = covariance_functions(delta)?;
        let det = (f.f1 * f.f2 - f.f3 * f.f3) / (f.f1 * f.f2);
        worst = worst.max(-det);
    }
    Ok(worst)
}

/// Variance after one SRK step from `N(0, 1)` with the stationary score
/// `s(t, x) = -x`.
pub fn stationary_variance(coeffs: CoefficientFn, delta: f64) -> Result<f64> {
    let c = coeffs(delta)?;
    let linear = LinearScore { g: Operator::scaled_identity(1, -1.0), h: nalgebra::DVector::zeros(1) };
    let step = affine_of_step(SamplerKind::Srk, &c, &linear);
    let law = crate::oracle::propagate(&GaussianLaw::standard(1), &step);
    Ok(law.variances()[0])
}

/// Largest relative gap between the `α` form of the SRK update and
/// `e^Δ Y + (e^Δ - e^{-Δ}) ŝ(t, Y + ζ1 g1) + ζ2 g1 + ζ3 g3`.
pub fn form_equivalence_error(coeffs: CoefficientFn, cases: usize, seed: u64) -> Result<f64> {
    let field = AnalyticScore::new(
        TargetSpec::finite(vec![vec![1.0, 0.5], vec![-0.5, -1.0]], vec![0.3, 0.7], true)?,
        2.0,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let delta = 10f64.powf(rng.random_range(-6.0..(0.25f64).log10()));
        let c = coeffs(delta)?;
        let t: f64 = rng.random_range(0.0..1.9);
        let y: Vec<f64> = (0..2).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let g1: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let g3: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let got = srk_step(&y, &c, &field, t, &g1, &g3)?;
        let probe: Vec<f64> = y.iter().zip(&g1).map(|(a, b)| a + c.zeta1 * b).collect();
        let s = field.score(t, &probe)?;
        let (e, spread) = (delta.exp(), 2.0 * delta.sinh());
        for i in 0..2 {
            let want = e * y[i] + spread * s[i] + c.zeta2 * g1[i] + c.zeta3 * g3[i];
            worst = worst.max((got[i] - want).abs() / want.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Posterior-mean route against the direct linear Gaussian score.
pub fn parametric_form_error(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = rng.random_range(1..5usize);
        let mean: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let cov: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..3.0)).collect();
        let horizon = rng.random_range(0.5..5.0);
        let f = AnalyticScore::new(TargetSpec::gaussian(mean, cov)?, horizon)?;
        let t = rng.random_range(0.0..horizon * 0.99);
        let x: Vec<f64> = (0..d).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let a = f.score(t, &x)?;
        let b = f.gaussian_direct_score(t, &x)?;
        for (u, v) in a.iter().zip(&b) {
            worst = worst.max((u - v).abs() / v.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Central differences of `log q_{T-t}` against the analytic score.
pub fn finite_difference_error(field: &AnalyticScore, cases: usize, seed: u64) -> Result<f64> {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = field.dim();
    let horizon = field.horizon();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let t = rng.random_range(0.0..horizon - 0.1);
        let x: Vec<f64> = (0..d).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let s = field.score(t, &x)?;
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += H;
            xm[i] -= H;
            let fd = (field.log_density(t, &xp)? - field.log_density(t, &xm)?) / (2.0 * H);
            worst = worst.max((fd - s[i]).abs() / s[i].abs().max(1.0));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionStats {
    /// Largest `‖ŝᴾ - s‖ - ‖ŝ - s‖`; nonpositive when projection contracts.
    pub max_excess: f64,
    /// Largest `σ²/λ ‖ŝᴾ - s‖ / (2√d)`.
    pub max_bound_ratio: f64,
    pub projected_cases: usize,
}

/// Randomized perturbed evaluations on the bounded two-atom target in d = 2.
pub fn projection_stats(cases: usize, seed: u64) -> Result<ProjectionStats> {
    let horizon = 2.0;
    let target = TargetSpec::finite(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.5, 0.5], true)?;
    let exact = AnalyticScore::new(target, horizon)?;
    let d = exact.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ProjectionStats { max_excess: f64::NEG_INFINITY, max_bound_ratio: 0.0, projected_cases: 0 };
    for i in 0..cases {
        let kind = if i % 2 == 0 {
            PerturbationKind::AdditiveRandomSmooth
        } else {
            PerturbationKind::AdditiveFixedDirection
        };
        let magnitude = 10f64.powf(rng.random_range(-2.0..2.0));
        let spec = PerturbationSpec::new(kind, magnitude, rng.random());
        let perturbed = PerturbedScore::new(&exact, spec)?;
        let projected = ProjectedScore::new(&perturbed)?;
        let t = rng.random_range(0.0..horizon * 0.999);
        let y: Vec<f64> = (0..d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let s = exact.score(t, &y)?;
        let s_hat = perturbed.score(t, &y)?;
        let s_p = projected.score(t, &y)?;
        let dist = |a: &[f64]| a.iter().zip(&s).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let (before, after) = (dist(&s_hat), dist(&s_p));
        if s_p != s_hat {
            stats.projected_cases += 1;
        }
        // roundoff allowance relative to the score scale
        let slack = 1e-12 * s.iter().chain(&s_hat).map(|v| v.abs()).fold(1.0, f64::max);
        stats.max_excess = stats.max_excess.max(after - before - slack);
        let ks = crate::score::reverse_kernel(t, horizon)?;
        let ratio = ks.sigma_sq() / ks.lambda * after / (2.0 * (d as f64).sqrt());
        stats.max_bound_ratio = stats.max_bound_ratio.max(ratio);
    }
    Ok(stats)
}

/// Worst envelope outcome and `K / bound` over the standard corollary scan.
pub fn corollary_scan() -> Result<(bool, f64)> {
    let mut all_ok = true;
    let mut worst_ratio = 0.0f64;
    for d in [1usize, 4, 16] {
        for eps in [0.25, 0.5] {
            for delta in [0.01, 0.1] {
                let grid = build_corollary_grid(&ScheduleParams::new(d, eps, delta))?;
                let report = validate_assumptions(&grid, d);
                all_ok &= report.envelope_ok();
                let bound = step_count_bound(grid.horizon, grid.kappa, delta);
                worst_ratio = worst_ratio.max(grid.steps() as f64 / bound);
            }
        }
    }
    Ok((all_ok, worst_ratio))
}

/// Largest `KL(q_T ‖ N(0, I)) / (d e^{-2T})` over a fixed set of Gaussian
/// targets with `‖μ‖² ≤ d` and `Σ₀ ⪯ I`.
pub fn init_kl_ratio(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut targets = vec![
        TargetSpec::isotropic_gaussian(4, 0.0, 0.0)?,
        TargetSpec::isotropic_gaussian(4, 1.0, 1.0)?,
        TargetSpec::isotropic_gaussian(8, 1.0, 0.01)?,
    ];
    for _ in 0..20 {
        let d = rng.random_range(1..9usize);
        let mut mean: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n2: f64 = mean.iter().map(|v| v * v).sum();
        let scale = (d as f64 / n2).sqrt() * rng.random::<f64>().sqrt();
        mean.iter_mut().for_each(|v| *v *= scale);
        let cov: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        targets.push(TargetSpec::gaussian(mean, cov)?);
    }
    for target in &targets {
        let d = target.dim();
        for horizon in [1.0, 2.0, 4.0, 8.0] {
            let q = q_delta_law(target, horizon)?;
            let kl = gaussian_kl(&q, &GaussianLaw::standard(d))?;
            worst = worst.max(kl / (d as f64 * (-2.0 * horizon).exp()));
        }
    }
    Ok(worst)
}

fn record(name: &str, threshold: f64, detail: &str, value: Result<f64>) -> CheckResult {
    match value {
        Ok(v) => check(name, v, threshold, detail),
        Err(e) => failed(name, threshold, e),
    }
}

/// Runs every check with the given coefficient source.
pub fn run_battery(coeffs: CoefficientFn) -> ValidationSuite {
    let mut checks = vec![
        record("coefficient-identities", 1e-12, "max rel err", coefficient_identity_error(coeffs)),
        record("limit-recovery", 1e-4, "max abs dev at 1e-6", limit_error(coeffs, 1e-6)),
        record("covariance-reconstruction", 1e-12, "max rel frobenius err", covariance_reconstruction_error(coeffs)),
        record("noise-psd", 1e-14, "max negative normalized det", noise_psd_defect()),
    ];
    let stationary = (|| -> Result<f64> {
        let a = (((1.0 - stationary_variance(coeffs, 1e-2)?) / 1e-6) - 4.0 / 3.0).abs() / 0.1;
        let b = (((1.0 - stationary_variance(coeffs, 1e-3)?) / 1e-9) - 4.0 / 3.0).abs() / 0.01;
        Ok(a.max(b))
    })();
    checks.push(record("stationary-variance", 1.0, "max |(1-v)/Δ³ - 4/3| over tolerance", stationary));
    checks.push(record("form-equivalence", 1e-12, "max rel err", form_equivalence_error(coeffs, 500, 11)));
    checks.push(record("parametric-form", 1e-10, "max rel err", parametric_form_error(200, 12)));
    let fd = (|| -> Result<f64> {
        let horizon = 2.0;
        let fields = [
            TargetSpec::finite(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5], true)?,
            TargetSpec::finite(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.5, 0.5], true)?,
            TargetSpec::mixture(vec![vec![1.0, 0.0], vec![-1.0, 1.0], vec![0.0, -1.5]], vec![0.2, 0.3, 0.5], 0.3)?,
        ];
        let mut worst = 0.0f64;
        for (i, t) in fields.into_iter().enumerate() {
            worst = worst.max(finite_difference_error(&AnalyticScore::new(t, horizon)?, 100, 13 + i as u64)?);
        }
        Ok(worst)
    })();
    checks.push(record("score-finite-difference", 1e-5, "max rel err", fd));
    match projection_stats(1000, 14) {
        Ok(p) => {
            checks.push(check("projection-contraction", p.max_excess.max(0.0), 0.0, "max excess error"));
            checks.push(check("projection-bound", p.max_bound_ratio, 1.0, "max σ²/λ‖ŝᴾ-s‖/(2√d)"));
        }
        Err(e) => {
            checks.push(failed("projection-contraction", 0.0, &e));
            checks.push(failed("projection-bound", 1.0, &e));
        }
    }
    match corollary_scan() {
        Ok((ok, ratio)) => {
            let mut c = check("corollary-schedule", ratio, 1.0, "max K / step bound");
            c.passed &= ok;
            if !ok {
                c.detail.push_str(", envelope violated");
            }
            checks.push(c);
        }
        Err(e) => checks.push(failed("corollary-schedule", 1.0, e)),
    }
    checks.push(record("init-kl-envelope", 1.5, "max KL/(d e^{-2T})", init_kl_ratio(15)));
    ValidationSuite { checks }
}

pub fn cmd_validate(coeffs: CoefficientFn, json: bool, out: &mut dyn std::io::Write) -> Result<ValidationSuite> {
    let suite = run_battery(coeffs);
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&suite)?)?;
    } else {
        for c in &suite.checks {
            writeln!(out, "{c}")?;
        }
    }
    Ok(suite)
}

/// Battery with the production coefficients.
pub fn default_battery() -> ValidationSuite {
    run_battery(coefficients)
}
