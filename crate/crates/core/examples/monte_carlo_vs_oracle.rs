//! Sampled moments against the exact affine-Gaussian output law.

use srk_diffusion::metrics::{empirical_moments, SampleSet};
use srk_diffusion::oracle::exact_output_law;
use srk_diffusion::schedule::build_uniform_grid;
use srk_diffusion::{AnalyticScore, Sampler, SamplerKind, TargetSpec};

fn main() -> srk_diffusion::Result<()> {
    let d = 3;
    let target = TargetSpec::gaussian(vec![1.0, 0.0, -0.5], vec![0.2, 1.0, 2.0])?;
    let grid = build_uniform_grid(3.0, 20, 0.05)?;
    let score = AnalyticScore::new(target.clone(), grid.horizon)?;
    let n = 20_000;
    let seeds: Vec<u64> = (0..n).collect();

    for kind in SamplerKind::ALL {
        let law = exact_output_law(&grid, kind, &target)?;
        let set = SampleSet::new(Sampler::new(grid.clone(), kind)?.sample_many(&score, &seeds)?, kind.name())?;
        let (m, c) = empirical_moments(&set)?;
        let var = law.variances();
        println!("{}", kind.name());
        for i in 0..d {
            let z = (m[i] - law.mean[i]) / (var[i] / n as f64).sqrt();
            println!(
                "  coord {i}: mean {:+.4} exact {:+.4} (z {z:+.2})  var {:.4} exact {:.4}",
                m[i], law.mean[i], c[(i, i)], var[i]
            );
        }
    }
    Ok(())
}
