use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use srk_diffusion::commands::reference_draws;
use srk_diffusion::metrics::{
    empirical_moments, energy_distance, energy_distance_bootstrap, energy_distance_sliced_bootstrap, energy_distance_with, energy_exact,
    energy_subsampled, loglog_slope, EnergyOptions, SampleSet,
};
use srk_diffusion::TargetSpec;

fn normals(n: usize, d: usize, shift: f64, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d)
        .map(|i| Distribution::<f64>::sample(&StandardNormal, &mut rng) + if i % d == 0 { shift } else { 0.0 })
        .collect::<Vec<f64>>();
    SampleSet::from_flat(data, d, "normal").unwrap()
}

#[test]
fn unit_shift_in_one_dimension() {
    let a = normals(100_000, 1, 0.0, 1);
    let b = normals(100_000, 1, 1.0, 2);
    let ed = energy_distance(&a, &b).unwrap();
    // 2 E|N(1, 2)| - 2 E|N(0, 2)|
    assert!((ed - 0.5419).abs() < 0.01, "{ed}");
    let null = energy_distance(&a, &normals(100_000, 1, 0.0, 3)).unwrap();
    assert!(ed > 10.0 * null, "{ed} vs null {null}");
}

#[test]
fn subsampled_tracks_exact() {
    let a = normals(1500, 2, 0.0, 4);
    let b = normals(1500, 2, 1.0, 5);
    let exact = energy_exact(&a, &b);
    let sub = energy_subsampled(&a, &b, 10_000, 11);
    assert!((sub - exact).abs() <= 0.05 * exact, "{sub} vs {exact}");
    let forced = EnergyOptions { max_exact_pairs: 0, directions: 0, pairs: 1_000_000, seed: 3 };
    let (est, se) = energy_distance_bootstrap(&a, &b, &forced, 4).unwrap();
    assert!((est - exact).abs() <= 0.01 * exact);
    assert!(se > 0.0 && se < 0.1 * exact);
    let sliced = EnergyOptions { max_exact_pairs: 0, ..Default::default() };
    let est = energy_distance_with(&a, &b, &sliced).unwrap();
    assert!((est - exact).abs() <= 1e-3 * exact, "{est} vs {exact}");
}

#[test]
fn sliced_estimate_tracks_exact_in_the_plane() {
    let a = normals(1500, 2, 0.0, 6);
    let b = normals(1500, 2, 0.5, 7);
    let exact = energy_exact(&a, &b);
    let (est, se) = energy_distance_sliced_bootstrap(&a, &b, 128, 30, 8).unwrap();
    assert!((est - exact).abs() <= 1e-3 * exact, "{est} vs {exact}");
    assert!(se > 0.0 && se < 0.5 * exact);
}

#[test]
fn reference_draws_of_standard_normal() {
    let t = TargetSpec::isotropic_gaussian(4, 0.0, 1.0).unwrap();
    let set = reference_draws(&t, 0.01, 1_000_000, 12).unwrap();
    let (m, c) = empirical_moments(&set).unwrap();
    assert!(m.amax() <= 4e-3, "{m}");
    for i in 0..4 {
        assert!((c[(i, i)] - 1.0).abs() < 6e-3);
    }
}

#[test]
fn two_atom_reference_moments() {
    let t = TargetSpec::finite(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.25, 0.75], true).unwrap();
    let delta = 0.1;
    let set = reference_draws(&t, delta, 200_000, 13).unwrap();
    let (m, c) = empirical_moments(&set).unwrap();
    let lam = (-delta).exp();
    let s2 = 1.0 - (-2.0 * delta).exp();
    // mean -λ/2, Var = λ²(1 - 1/4) + σ², Cov = λ² · 3/4
    for i in 0..2 {
        assert!((m[i] + 0.5 * lam).abs() < 0.01);
        assert!((c[(i, i)] - (0.75 * lam * lam + s2)).abs() < 0.01);
    }
    assert!((c[(0, 1)] - 0.75 * lam * lam).abs() < 0.01);
}

#[test]
fn slope_recovers_power_law() {
    let pts: Vec<(f64, f64)> = [16.0, 32.0, 64.0, 128.0].iter().map(|k: &f64| (*k, 3.0 * k.powf(-2.5))).collect();
    let fit = loglog_slope(&pts).unwrap();
    assert!((fit.slope + 2.5).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
}
