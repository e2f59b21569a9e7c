//! SRK and DDPM samples of a two-atom target against direct draws of the
//! early-stopped law.

use srk_diffusion::commands::reference_draws;
use srk_diffusion::kernel::kernel_scalars;
use srk_diffusion::metrics::{empirical_moments, energy_distance, SampleSet};
use srk_diffusion::schedule::build_uniform_grid;
use srk_diffusion::{AnalyticScore, Sampler, SamplerKind, TargetSpec};

fn main() -> srk_diffusion::Result<()> {
    let target = TargetSpec::finite(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.7, 0.3], true)?;
    let (horizon, delta, n) = (4.0, 0.1, 4000);
    let score = AnalyticScore::new(target.clone(), horizon)?;
    let reference = reference_draws(&target, delta, n, 99)?;
    let lam = kernel_scalars(delta).lambda;
    let mean = target.mean();
    println!("q_delta mean: [{:.4}, {:.4}]", lam * mean[0], lam * mean[1]);

    let seeds: Vec<u64> = (0..n as u64).collect();
    for kind in [SamplerKind::Srk, SamplerKind::DdpmEi] {
        for k in [25usize, 50, 100, 200] {
            let sampler = Sampler::new(build_uniform_grid(horizon, k, delta)?, kind)?;
            let set = SampleSet::new(sampler.sample_many(&score, &seeds)?, kind.name())?;
            let (m, _) = empirical_moments(&set)?;
            let ed = energy_distance(&set, &reference)?;
            println!("{:>8} K={k:<4} mean [{:+.4}, {:+.4}] energy {ed:.3e}", kind.name(), m[0], m[1]);
        }
    }
    Ok(())
}
