//! Geometric-near-the-end time grids and their assumption checks.

use srk_diffusion::schedule::{build_corollary_grid, step_count_bound, validate_assumptions, ScheduleParams};

fn main() -> srk_diffusion::Result<()> {
    println!("{:>3} {:>5} {:>5} {:>8} {:>10} {:>7} {:>9} {:>8} {:>6}", "d", "eps", "delta", "T", "kappa", "K", "bound", "envelope", "k*d^2");
    for d in [1usize, 4, 16] {
        for eps in [0.25, 0.5] {
            for delta in [0.01, 0.1] {
                let grid = build_corollary_grid(&ScheduleParams::new(d, eps, delta))?;
                let report = validate_assumptions(&grid, d);
                println!(
                    "{d:>3} {eps:>5} {delta:>5} {:>8.4} {:>10.3e} {:>7} {:>9.0} {:>8} {:>6}",
                    grid.horizon,
                    grid.kappa,
                    grid.steps(),
                    step_count_bound(grid.horizon, grid.kappa, delta),
                    report.envelope_ok(),
                    report.kappa_dimension,
                );
            }
        }
    }

    let grid = build_corollary_grid(&ScheduleParams::new(4, 0.5, 0.1))?;
    let w = grid.widths();
    println!("\nd=4 eps=0.5 delta=0.1: first widths {:?}", &w[..3]);
    println!("last widths {:?}", &w[w.len() - 3..]);
    Ok(())
}
