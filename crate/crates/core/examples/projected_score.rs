//! Projecting a perturbed score's implied posterior mean onto the support
//! ball never increases the score error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srk_diffusion::score::{PerturbationKind, PerturbationSpec, PerturbedScore, ProjectedScore, ScoreField};
use srk_diffusion::{AnalyticScore, TargetSpec};

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn main() -> srk_diffusion::Result<()> {
    let horizon = 2.0;
    let target = TargetSpec::finite(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.5, 0.5], true)?;
    let exact = AnalyticScore::new(target, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    println!("{:>9} {:>6} {:>12} {:>12}", "magnitude", "t", "raw error", "projected");
    for magnitude in [0.1, 1.0, 10.0] {
        let spec = PerturbationSpec::new(PerturbationKind::AdditiveRandomSmooth, magnitude, 3);
        let perturbed = PerturbedScore::new(&exact, spec)?;
        let projected = ProjectedScore::new(&perturbed)?;
        for _ in 0..3 {
            let t = rng.random_range(0.0..1.9);
            let y = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let s = exact.score(t, &y)?;
            let raw = norm_diff(&perturbed.score(t, &y)?, &s);
            let proj = norm_diff(&projected.score(t, &y)?, &s);
            println!("{magnitude:>9} {t:>6.3} {raw:>12.4e} {proj:>12.4e}");
        }
    }
    Ok(())
}
