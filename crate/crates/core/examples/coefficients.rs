//! Per-step SRK coefficients and their small-step limits.

use srk_diffusion::kernel::{coefficients, joint_noise_covariance};

fn main() -> srk_diffusion::Result<()> {
    println!("{:>10} {:>12} {:>12} {:>12} {:>12}", "delta", "alpha", "zeta1/rt", "zeta2/rt", "zeta3/rt");
    for delta in [1e-8, 1e-6, 1e-4, 1e-2, 0.1, 0.25] {
        let c = coefficients(delta)?;
        let r = delta.sqrt();
        println!(
            "{delta:>10.1e} {:>12.9} {:>12.9} {:>12.9} {:>12.9}",
            c.alpha,
            c.zeta1 / r,
            c.zeta2 / r,
            c.zeta3 / r
        );
    }
    println!(
        "limits: {:.9} {:.9} {:.9}",
        (2.0f64 / 3.0).sqrt(),
        1.5f64.sqrt(),
        0.5f64.sqrt()
    );

    let delta = 0.1;
    let cov = joint_noise_covariance(delta)?;
    let corr = cov[0][1] / (cov[0][0] * cov[1][1]).sqrt();
    println!("joint noise covariance at {delta}: {cov:?}");
    println!("correlation: {corr:.12}");
    Ok(())
}
