//! The invariant battery, once with the production coefficients and once
//! with a deliberately wrong `zeta2`.

use srk_diffusion::kernel::{coefficients, CoefficientSet};
use srk_diffusion::validate::run_battery;

fn broken(delta: f64) -> srk_diffusion::Result<CoefficientSet> {
    let mut c = coefficients(delta)?;
    c.zeta2 *= 1.01;
    Ok(c)
}

fn main() {
    for (label, f) in [("production", coefficients as fn(f64) -> _), ("zeta2 off by 1%", broken)] {
        let suite = run_battery(f);
        println!("== {label}: {}", if suite.all_passed() { "all pass" } else { "failures" });
        for c in &suite.checks {
            println!("{c}");
        }
    }
}
