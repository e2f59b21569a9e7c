//! Step count and exact KL against dimension on the generated schedule.

use srk_diffusion::config::{FamilySpec, RunConfig, ScheduleConfig, SeedSpec};
use srk_diffusion::commands::cmd_sweep_dim;
use srk_diffusion::score::PerturbationSpec;

fn main() -> srk_diffusion::Result<()> {
    let config = RunConfig {
        target: None,
        schedule: ScheduleConfig::Corollary { d: None, eps: 0.5, delta: 0.1, kappa: None, horizon: None, max_steps: None },
        samplers: vec![srk_diffusion::SamplerKind::Srk, srk_diffusion::SamplerKind::DdpmEi],
        perturbation: PerturbationSpec::none(),
        projection: false,
        seeds: SeedSpec::default(),
        metric: None,
        output: None,
        reference_samples: None,
        reference_seed: 0,
        energy_directions: None,
        energy_pairs: None,
        dims: vec![1, 2, 4, 8, 16],
        family: Some(FamilySpec::IsotropicGaussian { mean: 0.0, var: 0.25 }),
        record_trajectory: false,
        record_wall_time: false,
    };
    // CSV goes to stdout
    cmd_sweep_dim(&config)?;
    Ok(())
}
