//! Exact output-law KL against step count for all three samplers on a
//! Gaussian target. No Monte Carlo is involved.

use srk_diffusion::metrics::loglog_slope;
use srk_diffusion::oracle::{exact_output_law, gaussian_kl, q_delta_law};
use srk_diffusion::schedule::build_uniform_grid;
use srk_diffusion::{SamplerKind, TargetSpec};

fn main() -> srk_diffusion::Result<()> {
    let target = TargetSpec::isotropic_gaussian(4, 0.0, 0.25)?;
    let (horizon, delta) = (4.0, 0.01);
    let q = q_delta_law(&target, delta)?;
    let ks = [16usize, 32, 64, 128, 256, 512, 1024];

    for kind in SamplerKind::ALL {
        let mut pts = Vec::new();
        print!("{:>14}", kind.name());
        for &k in &ks {
            let grid = build_uniform_grid(horizon, k, delta)?;
            let kl = gaussian_kl(&q, &exact_output_law(&grid, kind, &target)?)?;
            print!(" {kl:>10.3e}");
            pts.push((k as f64, kl));
        }
        let fit = loglog_slope(&pts)?;
        println!("  slope {:+.3} (r2 {:.4})", fit.slope, fit.r_squared);
    }
    Ok(())
}
