//! Subcommand bodies behind the command-line front end.
//!
//! Exit codes: 0 success, 1 check or run failure, 2 usage or configuration
//! error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{FamilySpec, MetricKind, RunConfig, ScheduleConfig};
use crate::error::{Error, Result};
use crate::kernel::kernel_scalars;
use crate::metrics::{
    empirical_moments, energy_distance_with, loglog_slope, EnergyOptions, SampleSet, SlopeRow,
    SweepResult, SweepRow, CSV_HEADER,
};
use crate::oracle::{exact_output_law_for_field, gaussian_kl, q_delta_law};
use crate::sampler::{CountingScore, Sampler, SamplerKind, StateRecord};
use crate::schedule::{step_count_bound, validate_assumptions, TimeGrid};
use crate::score::{AnalyticScore, PerturbationKind, PerturbationSpec, PerturbedScore, ProjectedScore, ScoreField, TargetSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Invalid(_)
        | Error::Schedule(_)
        | Error::Target(_)
        | Error::Dimension { .. }
        | Error::StepOutOfRange(_)
        | Error::TimeOutOfRange { .. }
        | Error::Json(_) => EXIT_USAGE,
        Error::NegativeRadicand(_)
        | Error::NonFinite { .. }
        | Error::NotAffine(_)
        | Error::Singular
        | Error::Io(_) => EXIT_FAILED,
    }
}

/// Analytic score of `target`, optionally perturbed and then projected.
pub fn build_score(
    target: &TargetSpec,
    horizon: f64,
    perturbation: &PerturbationSpec,
    projection: bool,
) -> Result<Box<dyn ScoreField>> {
    let base = AnalyticScore::new(target.clone(), horizon)?;
    let field: Box<dyn ScoreField> = if perturbation.kind == PerturbationKind::None {
        Box::new(base)
    } else {
        Box::new(PerturbedScore::new(base, *perturbation)?)
    };
    if projection {
        Ok(Box::new(ProjectedScore::new(field)?))
    } else {
        Ok(field)
    }
}

/// Writes to `path`, or to stdout when no path is given.
fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub mode: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub kappa: f64,
    pub delta: f64,
    #[serde(rename = "K")]
    pub steps: usize,
    pub min_width: f64,
    pub max_width: f64,
    pub envelope_ok: bool,
    pub kappa_dimension_ok: bool,
    pub smallness_ok: bool,
    pub max_smallness_lhs: f64,
    pub step_bound: f64,
    /// Whether the checks gate the exit code (corollary grids only).
    pub gated: bool,
    pub passed: bool,
}

/// Builds and checks a grid. Corollary grids pass when the step envelope and
/// `κd² ≤ 1` hold; the smallness condition is reported but does not gate.
/// Uniform grids report every check without gating.
pub fn cmd_schedule(
    schedule: &ScheduleConfig,
    d: usize,
    grid_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<ScheduleSummary> {
    let grid = schedule.single_grid(d)?;
    let d = match schedule {
        ScheduleConfig::Corollary { d: Some(sd), .. } => *sd,
        _ => d,
    };
    let report = validate_assumptions(&grid, d);
    let widths = grid.widths();
    let gated = matches!(schedule, ScheduleConfig::Corollary { .. });
    let summary = ScheduleSummary {
        mode: if gated { "corollary" } else { "uniform" }.into(),
        d,
        horizon: grid.horizon,
        kappa: grid.kappa,
        delta: grid.delta_stop,
        steps: grid.steps(),
        min_width: widths.iter().cloned().fold(f64::INFINITY, f64::min),
        max_width: widths.iter().cloned().fold(0.0, f64::max),
        envelope_ok: report.envelope_ok(),
        kappa_dimension_ok: report.kappa_dimension,
        smallness_ok: report.smallness_ok(),
        max_smallness_lhs: report.max_smallness_lhs,
        step_bound: step_count_bound(grid.horizon, grid.kappa, grid.delta_stop),
        gated,
        passed: !gated || report.required_ok(),
    };
    let verdict = |ok: bool, gate: bool| match (ok, gate) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "FAIL (informational)",
    };
    writeln!(out, "mode {}", summary.mode)?;
    writeln!(out, "d {}", summary.d)?;
    writeln!(out, "T {}", summary.horizon)?;
    writeln!(out, "kappa {}", summary.kappa)?;
    writeln!(out, "delta {}", summary.delta)?;
    writeln!(out, "K {}", summary.steps)?;
    writeln!(out, "min_width {:e}", summary.min_width)?;
    writeln!(out, "max_width {:e}", summary.max_width)?;
    writeln!(
        out,
        "envelope {} (first violation: {})",
        verdict(summary.envelope_ok, gated),
        report.first_envelope_violation.map(|k| format!("step {k}")).unwrap_or_else(|| "none".into())
    )?;
    writeln!(
        out,
        "kappa_dimension {} (kappa d^2 = {:e})",
        verdict(summary.kappa_dimension_ok, gated),
        summary.kappa * (d * d) as f64
    )?;
    writeln!(
        out,
        "smallness {} (max lhs {:e} vs 0.5)",
        verdict(summary.smallness_ok, false),
        summary.max_smallness_lhs
    )?;
    writeln!(
        out,
        "step_bound {} (K = {} vs {:e})",
        verdict(summary.steps as f64 <= summary.step_bound, false),
        summary.steps,
        summary.step_bound
    )?;
    if let Some(p) = grid_out {
        std::fs::write(p, grid.to_json()?)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleHeader {
    pub kind: SamplerKind,
    #[serde(rename = "K")]
    pub steps: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub delta: f64,
    pub seeds: usize,
    pub nfe: usize,
    pub record_trajectory: bool,
}

/// Runs every configured sampler over every seed and writes JSON lines: a
/// header per sampler followed by one state line per recorded state.
pub fn cmd_sample(config: &RunConfig) -> Result<()> {
    let target = config.require_target()?;
    config.check_target(target)?;
    let grid = config.schedule.single_grid(target.dim())?;
    let score = build_score(target, grid.horizon, &config.perturbation, config.projection)?;
    let seeds = config.seeds.seeds();

    let mut blocks = Vec::with_capacity(config.samplers.len());
    for &kind in &config.samplers {
        let sampler = Sampler::new(grid.clone(), kind)?;
        let trajectories = seeds
            .par_iter()
            .map(|&s| sampler.run(score.as_ref(), s, config.record_trajectory))
            .collect::<Result<Vec<_>>>()?;
        blocks.push((kind, trajectories));
    }

    let mut w = open_output(config.output.as_deref())?;
    for (kind, trajectories) in blocks {
        let header = SampleHeader {
            kind,
            steps: grid.steps(),
            d: target.dim(),
            horizon: grid.horizon,
            delta: grid.delta_stop,
            seeds: seeds.len(),
            nfe: trajectories.first().map(|t| t.nfe).unwrap_or(0),
            record_trajectory: config.record_trajectory,
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (seed, traj) in seeds.iter().zip(&trajectories) {
            let first = grid.steps() + 1 - traj.states.len();
            for (i, s) in traj.states.iter().enumerate() {
                let rec = StateRecord { seed: *seed, step: first + i, state: s.clone() };
                writeln!(w, "{}", serde_json::to_string(&rec)?)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean and covariance of `q_τ`.
pub fn forward_moments(target: &TargetSpec, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
    let ks = kernel_scalars(tau);
    let (lam, s2) = (ks.lambda, ks.sigma_sq());
    let d = target.dim();
    let mean = DVector::from_vec(target.mean()) * lam;
    let mut cov = DMatrix::identity(d, d) * s2;
    match target {
        TargetSpec::Gaussian { cov: c, .. } => {
            for i in 0..d {
                cov[(i, i)] += lam * lam * c[i];
            }
        }
        TargetSpec::FinitePointSet { atoms: pts, weights, .. }
        | TargetSpec::GaussianMixture { means: pts, weights, .. } => {
            let m0 = DVector::from_vec(target.mean());
            for (p, w) in pts.iter().zip(weights) {
                let c = DVector::from_column_slice(p) - &m0;
                cov += (&c * c.transpose()) * (w * lam * lam);
            }
            if let TargetSpec::GaussianMixture { component_var, .. } = target {
                for i in 0..d {
                    cov[(i, i)] += lam * lam * component_var;
                }
            }
        }
    }
    (mean, cov)
}

/// `n` direct draws from `q_δ`.
pub fn reference_draws(target: &TargetSpec, delta: f64, n: usize, seed: u64) -> Result<SampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * target.dim());
    for _ in 0..n {
        data.extend(target.sample_forward(delta, &mut rng));
    }
    SampleSet::from_flat(data, target.dim(), "q_delta")
}

struct CellSpec<'a> {
    kind: SamplerKind,
    grid: TimeGrid,
    target: &'a TargetSpec,
    reference: Option<&'a SampleSet>,
}

/// Metric value and per-run NFE for one (kind, grid) cell.
fn run_cell(config: &RunConfig, cell: &CellSpec<'_>) -> Result<(f64, usize)> {
    let target = cell.target;
    let grid = &cell.grid;
    let score = build_score(target, grid.horizon, &config.perturbation, config.projection)?;
    match config.metric_for(target) {
        MetricKind::GaussianKl => {
            let law = exact_output_law_for_field(grid, cell.kind, score.as_ref())?;
            let q = q_delta_law(target, grid.delta_stop)?;
            Ok((gaussian_kl(&q, &law)?, grid.steps()))
        }
        metric => {
            let seeds = config.seeds.seeds();
            let counted = CountingScore::new(score.as_ref());
            let states = Sampler::new(grid.clone(), cell.kind)?.sample_many(&counted, &seeds)?;
            let nfe = counted.calls() / seeds.len();
            let samples = SampleSet::new(states, cell.kind.name())?;
            let value = match metric {
                MetricKind::Energy => {
                    let reference = cell.reference.expect("reference draws for energy");
                    let mut opts = EnergyOptions { seed: config.reference_seed, ..Default::default() };
                    if let Some(n) = config.energy_directions {
                        opts.directions = n;
                    }
                    if let Some(p) = config.energy_pairs {
                        opts.pairs = p;
                    }
                    energy_distance_with(&samples, reference, &opts)?
                }
                _ => {
                    let (m_hat, c_hat) = empirical_moments(&samples)?;
                    let (m, c) = forward_moments(target, grid.delta_stop);
                    (m_hat - m).norm() + (c_hat - c).norm()
                }
            };
            Ok((value, nfe))
        }
    }
}

fn reference_for(config: &RunConfig, target: &TargetSpec, delta: f64) -> Result<Option<SampleSet>> {
    if config.metric_for(target) != MetricKind::Energy {
        return Ok(None);
    }
    let n = config.reference_samples.unwrap_or_else(|| config.seeds.seeds().len());
    reference_draws(target, delta, n, config.reference_seed).map(Some)
}

/// Evaluates cells in parallel, then writes rows in cell order. Rows before
/// the first failed cell are flushed before the error is returned.
fn run_cells<W: Write>(
    config: &RunConfig,
    cells: &[CellSpec<'_>],
    w: &mut W,
    result: &mut SweepResult,
) -> Result<()> {
    let seed_label = match config.metric_for(cells[0].target) {
        MetricKind::GaussianKl => None,
        _ => config.seeds.label(),
    };
    let outcomes: Vec<Result<(f64, usize, f64)>> = cells
        .par_iter()
        .map(|cell| {
            let start = Instant::now();
            let (value, nfe) = run_cell(config, cell)?;
            Ok((value, nfe, start.elapsed().as_secs_f64()))
        })
        .collect();
    for (cell, outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok((value, nfe, elapsed)) => {
                let row = SweepRow {
                    kind: cell.kind,
                    steps: cell.grid.steps(),
                    d: cell.target.dim(),
                    metric: config.metric_for(cell.target).to_string(),
                    value,
                    nfe,
                    seed: seed_label,
                    wall_time: if config.record_wall_time { elapsed } else { 0.0 },
                };
                SweepResult::write_row(w, &row)?;
                result.rows.push(row);
            }
            Err(e) => {
                w.flush()?;
                return Err(e);
            }
        }
    }
    Ok(())
}

fn fit_slopes(rows: &[SweepRow], kinds: &[SamplerKind], against: &str) -> Vec<SlopeRow> {
    let mut slopes = Vec::new();
    for &kind in kinds {
        let of_kind: Vec<&SweepRow> = rows.iter().filter(|r| r.kind == kind).collect();
        let Some(first) = of_kind.first() else { continue };
        let x = |r: &SweepRow| if against == "K" { r.steps as f64 } else { r.d as f64 };
        let value_pts: Vec<(f64, f64)> = of_kind.iter().map(|r| (x(r), r.value)).collect();
        if let Ok(fit) = loglog_slope(&value_pts) {
            slopes.push(SlopeRow { kind, against: against.into(), metric: first.metric.clone(), fit });
        }
        if against == "d" {
            let nfe_pts: Vec<(f64, f64)> = of_kind.iter().map(|r| (x(r), r.nfe as f64)).collect();
            if let Ok(fit) = loglog_slope(&nfe_pts) {
                slopes.push(SlopeRow { kind, against: against.into(), metric: "nfe".into(), fit });
            }
        }
    }
    slopes
}

fn finish_sweep<W: Write>(w: &mut W, result: &mut SweepResult, slopes: Vec<SlopeRow>) -> Result<()> {
    for s in &slopes {
        SweepResult::write_slope(w, s)?;
    }
    result.slopes = slopes;
    w.flush()?;
    result.check()
}

/// Metric against `K` for every (kind, K) cell of a uniform schedule.
pub fn cmd_sweep_steps(config: &RunConfig) -> Result<SweepResult> {
    let target = config.require_target()?;
    config.check_target(target)?;
    let grids = config.schedule.uniform_grids()?;
    let reference = reference_for(config, target, grids[0].delta_stop)?;
    let cells: Vec<CellSpec<'_>> = config
        .samplers
        .iter()
        .flat_map(|&kind| {
            grids.iter().map(move |g| (kind, g.clone()))
        })
        .map(|(kind, grid)| CellSpec { kind, grid, target, reference: reference.as_ref() })
        .collect();

    let mut w = open_output(config.output.as_deref())?;
    writeln!(w, "{CSV_HEADER}")?;
    let mut result = SweepResult::default();
    run_cells(config, &cells, &mut w, &mut result)?;
    let slopes = fit_slopes(&result.rows, &config.samplers, "K");
    finish_sweep(&mut w, &mut result, slopes)?;
    Ok(result)
}

/// Metric and NFE against dimension for a target family.
pub fn cmd_sweep_dim(config: &RunConfig) -> Result<SweepResult> {
    let family: &FamilySpec =
        config.family.as_ref().ok_or_else(|| Error::Config("sweep-dim needs a family".into()))?;
    if config.dims.is_empty() {
        return Err(Error::Config("sweep-dim needs a nonempty dims list".into()));
    }
    if config.dims.contains(&0) {
        return Err(Error::Config("dimensions must be positive".into()));
    }
    let targets: Vec<TargetSpec> = config.dims.iter().map(|&d| family.target(d)).collect::<Result<_>>()?;
    let mut grids = Vec::with_capacity(targets.len());
    let mut references = Vec::with_capacity(targets.len());
    for t in &targets {
        config.check_target(t)?;
        let grid = match &config.schedule {
            ScheduleConfig::Corollary { .. } => {
                let mut p = config.schedule.corollary_params(t.dim()).expect("corollary");
                p.d = t.dim();
                crate::schedule::build_corollary_grid(&p)?
            }
            uniform => uniform.single_grid(t.dim())?,
        };
        references.push(reference_for(config, t, grid.delta_stop)?);
        grids.push(grid);
    }
    let mut cells = Vec::new();
    for &kind in &config.samplers {
        for ((t, g), r) in targets.iter().zip(&grids).zip(&references) {
            cells.push(CellSpec { kind, grid: g.clone(), target: t, reference: r.as_ref() });
        }
    }

    let mut w = open_output(config.output.as_deref())?;
    writeln!(w, "{CSV_HEADER}")?;
    let mut result = SweepResult::default();
    run_cells(config, &cells, &mut w, &mut result)?;
    let slopes = fit_slopes(&result.rows, &config.samplers, "d");
    finish_sweep(&mut w, &mut result, slopes)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_moments_two_atoms() {
        let t = TargetSpec::finite(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5], true).unwrap();
        let tau = std::f64::consts::LN_2;
        let (m, c) = forward_moments(&t, tau);
        assert!(m[0].abs() < 1e-15);
        // λ² + σ² = 1
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_moments_match_gaussian_law() {
        let t = TargetSpec::gaussian(vec![1.0, -2.0], vec![0.5, 2.0]).unwrap();
        let (m, c) = forward_moments(&t, 0.3);
        let law = q_delta_law(&t, 0.3).unwrap();
        assert!((m - &law.mean).norm() < 1e-15);
        assert!((c.diagonal() - law.variances()).norm() < 1e-15);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::NonFinite { step: 3 }), EXIT_FAILED);
    }
}
