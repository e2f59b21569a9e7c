//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srk_diffusion::commands::reference_draws;
use srk_diffusion::kernel::coefficients;
use srk_diffusion::metrics::{empirical_moments, energy_distance_sliced_bootstrap, loglog_slope, SampleSet};
use srk_diffusion::oracle::{exact_output_law, gaussian_kl, q_delta_law, GaussianLaw};
use srk_diffusion::schedule::{build_corollary_grid, build_uniform_grid, step_count_bound, validate_assumptions, ScheduleParams};
use srk_diffusion::validate::{coefficient_identity_error, finite_difference_error, limit_error, projection_stats, stationary_variance};
use srk_diffusion::{AnalyticScore, Sampler, SamplerKind, TargetSpec};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn coefficient_identities() -> Outcome {
    let worst = coefficient_identity_error(coefficients).unwrap();
    outcome(worst <= 1e-12, format!("max rel err over 1000 widths in [1e-8, 0.25] {worst:.2e} (tol 1e-12)"))
}

fn limit_recovery() -> Outcome {
    let dev = limit_error(coefficients, 1e-6).unwrap();
    outcome(dev <= 1e-4, format!("max |zeta_i/sqrt(delta) - limit_i| {dev:.2e} (tol 1e-4)"))
}

fn order_separation() -> Outcome {
    let target = TargetSpec::isotropic_gaussian(4, 0.0, 0.25).unwrap();
    let q = q_delta_law(&target, 0.01).unwrap();
    let ks = [16usize, 32, 64, 128, 256, 512, 1024];
    let series = |kind| -> Vec<(f64, f64)> {
        ks.iter()
            .map(|&k| {
                let grid = build_uniform_grid(4.0, k, 0.01).unwrap();
                (k as f64, gaussian_kl(&q, &exact_output_law(&grid, kind, &target).unwrap()).unwrap())
            })
            .collect()
    };
    let srk = series(SamplerKind::Srk);
    let ddpm = series(SamplerKind::DdpmEi);
    let s_srk = loglog_slope(&srk).unwrap().slope;
    let s_ddpm = loglog_slope(&ddpm).unwrap().slope;
    let ordered = srk.iter().zip(&ddpm).filter(|(s, _)| s.0 >= 64.0).all(|(s, d)| s.1 < d.1);
    let srk_ok = s_srk <= -1.8;
    let ddpm_ok = (-1.3..=-0.7).contains(&s_ddpm);
    outcome(
        srk_ok && ddpm_ok && ordered,
        format!(
            "SRK slope {s_srk:.3} (<= -1.8: {srk_ok}), DdpmEI slope {s_ddpm:.3} (in [-1.3, -0.7]: {ddpm_ok}), SRK < DdpmEI for K >= 64: {ordered}"
        ),
    )
}

fn stationary_variance_expansion() -> Outcome {
    let a = (1.0 - stationary_variance(coefficients, 1e-2).unwrap()) / 1e-6;
    let b = (1.0 - stationary_variance(coefficients, 1e-3).unwrap()) / 1e-9;
    let ok = (a - 4.0 / 3.0).abs() <= 0.1 && (b - 4.0 / 3.0).abs() <= 0.01;
    outcome(ok, format!("(1-v)/delta^3 = {a:.5} at 1e-2 (tol 0.1), {b:.5} at 1e-3 (tol 0.01)"))
}

fn corollary_schedule() -> Outcome {
    let mut ok = true;
    let mut worst = 0.0f64;
    for d in [1usize, 4, 16] {
        for eps in [0.25, 0.5] {
            for delta in [0.01, 0.1] {
                let grid = build_corollary_grid(&ScheduleParams::new(d, eps, delta)).unwrap();
                let bound = step_count_bound(grid.horizon, grid.kappa, delta);
                ok &= validate_assumptions(&grid, d).envelope_ok() && grid.steps() as f64 <= bound;
                worst = worst.max(grid.steps() as f64 / bound);
            }
        }
    }
    outcome(ok, format!("12 grids, envelope holds everywhere: {ok}, max K/bound {worst:.3e}"))
}

fn projection_contraction() -> Outcome {
    let p = projection_stats(1000, 2024).unwrap();
    let ok = p.max_excess <= 0.0 && p.max_bound_ratio <= 1.0;
    outcome(
        ok,
        format!(
            "max (|sP - s| - |s^ - s|) {:.2e}, max sigma^2/lambda |sP - s| / 2sqrt(d) {:.4}, {} of 1000 projected",
            p.max_excess, p.max_bound_ratio, p.projected_cases
        ),
    )
}

fn score_cross_check() -> Outcome {
    let horizon = 2.0;
    let targets = [
        TargetSpec::finite(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5], true).unwrap(),
        TargetSpec::finite(vec![vec![1.0, 0.5], vec![-0.8, -1.0]], vec![0.4, 0.6], true).unwrap(),
        TargetSpec::mixture(vec![vec![1.0, 0.0], vec![-1.0, 1.0], vec![0.0, -1.5]], vec![0.2, 0.3, 0.5], 0.3)
            .unwrap(),
    ];
    let mut worst = 0.0f64;
    for (i, t) in targets.into_iter().enumerate() {
        let f = AnalyticScore::new(t, horizon).unwrap();
        worst = worst.max(finite_difference_error(&f, 100, 70 + i as u64).unwrap());
    }
    outcome(worst <= 1e-5, format!("max rel err of central differences {worst:.2e} (tol 1e-5)"))
}

fn monte_carlo_agreement() -> Outcome {
    let d = 8;
    let target = TargetSpec::isotropic_gaussian(d, 0.0, 1.0).unwrap();
    let grid = build_uniform_grid(2.0, 100, 0.01).unwrap();
    let law = exact_output_law(&grid, SamplerKind::Srk, &target).unwrap();
    let score = AnalyticScore::new(target, grid.horizon).unwrap();
    let n = 100_000usize;
    let seeds: Vec<u64> = (0..n as u64).collect();
    let set = SampleSet::new(Sampler::new(grid, SamplerKind::Srk).unwrap().sample_many(&score, &seeds).unwrap(), "srk")
        .unwrap();
    let (m, c) = empirical_moments(&set).unwrap();
    let var = law.variances();
    let (mut zm, mut zv) = (0.0f64, 0.0f64);
    for i in 0..d {
        zm = zm.max((m[i] - law.mean[i]).abs() / (var[i] / n as f64).sqrt());
        // Var(s²) = 2σ⁴/(n-1) for Gaussian samples
        zv = zv.max((c[(i, i)] - var[i]).abs() / (var[i] * (2.0 / (n - 1) as f64).sqrt()));
    }
    outcome(zm <= 4.0 && zv <= 4.0, format!("max |z| mean {zm:.2}, variance {zv:.2} (band 4)"))
}

fn initialization_envelope() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut targets = vec![
        TargetSpec::isotropic_gaussian(4, 1.0, 0.0).unwrap(),
        TargetSpec::isotropic_gaussian(4, 1.0, 1.0).unwrap(),
        TargetSpec::isotropic_gaussian(16, 0.0, 0.5).unwrap(),
    ];
    for _ in 0..30 {
        let d = rng.random_range(1..12usize);
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let radius = (d as f64).sqrt() * rng.random::<f64>();
        let mean = raw.iter().map(|v| v * radius / norm).collect();
        let cov = (0..d).map(|_| rng.random::<f64>()).collect();
        targets.push(TargetSpec::gaussian(mean, cov).unwrap());
    }
    let mut worst = 0.0f64;
    for t in &targets {
        let d = t.dim();
        for horizon in [1.0, 2.0, 4.0, 8.0] {
            let kl = gaussian_kl(&q_delta_law(t, horizon).unwrap(), &GaussianLaw::standard(d)).unwrap();
            worst = worst.max(kl / (d as f64 * (-2.0 * horizon).exp()));
        }
    }
    outcome(worst <= 1.5, format!("max KL(q_T, N(0,I)) / (d e^(-2T)) {worst:.4} (tol 1.5)"))
}

fn non_gaussian_sanity() -> Outcome {
    let target = TargetSpec::finite(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.5, 0.5], true).unwrap();
    let (horizon, delta, n) = (4.0, 0.1, 100_000usize);
    let score = AnalyticScore::new(target.clone(), horizon).unwrap();
    let reference = reference_draws(&target, delta, n, 0xace).unwrap();
    let seeds: Vec<u64> = (0..n as u64).map(|s| s + 1_000_000).collect();
    let mut table = Vec::new();
    for kind in [SamplerKind::Srk, SamplerKind::DdpmEi] {
        for k in [50usize, 100, 200] {
            let sampler = Sampler::new(build_uniform_grid(horizon, k, delta).unwrap(), kind).unwrap();
            let set = SampleSet::new(sampler.sample_many(&score, &seeds).unwrap(), kind.name()).unwrap();
            let (ed, se) = energy_distance_sliced_bootstrap(&set, &reference, 64, 20, 17).unwrap();
            table.push((kind, k, ed, se));
        }
    }
    let mut ok = true;
    let mut detail = Vec::new();
    for kind in [SamplerKind::Srk, SamplerKind::DdpmEi] {
        let rows: Vec<_> = table.iter().filter(|r| r.0 == kind).collect();
        for w in rows.windows(2) {
            ok &= w[1].2 <= w[0].2 + 2.0 * w[1].3.max(w[0].3);
        }
        detail.push(format!(
            "{}: {}",
            kind.name(),
            rows.iter().map(|r| format!("K={} {:.2e}±{:.1e}", r.1, r.2, r.3)).collect::<Vec<_>>().join(", ")
        ));
    }
    let srk = table.iter().find(|r| r.0 == SamplerKind::Srk && r.1 == 200).unwrap();
    let ddpm = table.iter().find(|r| r.0 == SamplerKind::DdpmEi && r.1 == 200).unwrap();
    let srk_le = srk.2 <= ddpm.2 + 2.0 * srk.3.max(ddpm.3);
    outcome(ok && srk_le, format!("{}; SRK <= DdpmEI at K=200: {srk_le}", detail.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("coefficient identities", coefficient_identities),
        ("limit recovery", limit_recovery),
        ("order separation", order_separation),
        ("stationary-variance expansion", stationary_variance_expansion),
        ("generated schedule", corollary_schedule),
        ("projection contraction", projection_contraction),
        ("score oracle cross-check", score_cross_check),
        ("Monte Carlo vs exact law", monte_carlo_agreement),
        ("initialization envelope", initialization_envelope),
        ("non-Gaussian sanity", non_gaussian_sanity),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        if !o.passed {
            failures += 1;
        }
        println!(
            "criterion {:>2} {} {} [{:.2}s]: {}",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            name,
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of {} passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
