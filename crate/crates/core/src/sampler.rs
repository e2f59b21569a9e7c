//! Discrete-time reverse samplers.
//!
//! All three kinds share the exponential-integrator skeleton and spend one
//! score evaluation per step:
//!
//! * `Srk`: `Y' = (Y + (1-α) ŝ(t_k, Y + ζ1 g1))/√α + ζ2 g1 + ζ3 g3`
//! * `LimitVariant`: the same update with `ζ1 = ζ2 = ζ3 = √Δ`
//! * `DdpmEi`: `Y' = e^Δ Y + 2(e^Δ - 1) ŝ(t_k, Y) + √(e^{2Δ} - 1) g`

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{CoefficientSet, CoefficientTable};
use crate::rng::{NoiseStream, SLOT_G1, SLOT_G3, SLOT_INIT};
use crate::schedule::TimeGrid;
use crate::score::{LinearScore, ScoreField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Srk,
    DdpmEi,
    LimitVariant,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::Srk, SamplerKind::DdpmEi, SamplerKind::LimitVariant];

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Srk => "srk",
            SamplerKind::DdpmEi => "ddpm_ei",
            SamplerKind::LimitVariant => "limit_variant",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srk" => Ok(SamplerKind::Srk),
            "ddpm_ei" | "ddpm" => Ok(SamplerKind::DdpmEi),
            "limit_variant" | "limit" => Ok(SamplerKind::LimitVariant),
            other => Err(Error::Config(format!("unknown sampler kind '{other}'"))),
        }
    }
}

fn check_finite(state: &[f64], step: usize) -> Result<()> {
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

#[allow(clippy::too_many_arguments)]
fn rk_update(
    state: &[f64],
    inv_sqrt_alpha: f64,
    one_minus_alpha: f64,
    zetas: [f64; 3],
    score: &dyn ScoreField,
    t_k: f64,
    g1: &[f64],
    g3: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let [z1, z2, z3] = zetas;
    let shifted: Vec<f64> = state.iter().zip(g1).map(|(y, g)| y + z1 * g).collect();
    score.score_into(t_k, &shifted, out)?;
    for i in 0..state.len() {
        out[i] = inv_sqrt_alpha * (state[i] + one_minus_alpha * out[i]) + z2 * g1[i] + z3 * g3[i];
    }
    Ok(())
}

pub fn srk_step(
    state: &[f64],
    coeffs: &CoefficientSet,
    score: &dyn ScoreField,
    t_k: f64,
    g1: &[f64],
    g3: &[f64],
) -> Result<Vec<f64>> {
    check_finite(state, 0)?;
    let mut out = vec![0.0; state.len()];
    rk_update(
        state,
        coeffs.inv_sqrt_alpha(),
        coeffs.one_minus_alpha(),
        [coeffs.zeta1, coeffs.zeta2, coeffs.zeta3],
        score,
        t_k,
        g1,
        g3,
        &mut out,
    )?;
    Ok(out)
}

pub fn limit_variant_step(
    state: &[f64],
    delta: f64,
    score: &dyn ScoreField,
    t_k: f64,
    g1: &[f64],
    g3: &[f64],
) -> Result<Vec<f64>> {
    check_finite(state, 0)?;
    let mut out = vec![0.0; state.len()];
    let z = delta.sqrt();
    rk_update(
        state,
        delta.exp(),
        -(-2.0 * delta).exp_m1(),
        [z, z, z],
        score,
        t_k,
        g1,
        g3,
        &mut out,
    )?;
    Ok(out)
}

pub fn ddpm_ei_step(
    state: &[f64],
    delta: f64,
    score: &dyn ScoreField,
    t_k: f64,
    g: &[f64],
) -> Result<Vec<f64>> {
    check_finite(state, 0)?;
    let mut out = vec![0.0; state.len()];
    ddpm_update(state, delta, score, t_k, g, &mut out)?;
    Ok(out)
}

fn ddpm_update(
    state: &[f64],
    delta: f64,
    score: &dyn ScoreField,
    t_k: f64,
    g: &[f64],
    out: &mut [f64],
) -> Result<()> {
    score.score_into(t_k, state, out)?;
    let growth = delta.exp();
    let drift = 2.0 * delta.exp_m1();
    let noise = (2.0 * delta).exp_m1().sqrt();
    for i in 0..state.len() {
        out[i] = growth * state[i] + drift * out[i] + noise * g[i];
    }
    Ok(())
}

/// Score wrapper that counts evaluations.
pub struct CountingScore<'a> {
    inner: &'a dyn ScoreField,
    calls: AtomicUsize,
}

impl<'a> CountingScore<'a> {
    pub fn new(inner: &'a dyn ScoreField) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ScoreField for CountingScore<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.score_into(t, x, out)
    }

    fn linearization(&self, t: f64) -> Option<LinearScore> {
        self.inner.linearization(t)
    }

    fn support_radius(&self) -> Option<f64> {
        self.inner.support_radius()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `Ŷ_{t_0..t_K}` when recorded, otherwise only `Ŷ_{t_K}`.
    pub states: Vec<Vec<f64>>,
    pub nfe: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least one state")
    }
}

/// A sampler bound to a grid, with its per-step coefficients precomputed.
#[derive(Debug, Clone)]
pub struct Sampler {
    grid: TimeGrid,
    kind: SamplerKind,
    table: Option<CoefficientTable>,
}

impl Sampler {
    pub fn new(grid: TimeGrid, kind: SamplerKind) -> Result<Self> {
        grid.check()?;
        let table = match kind {
            SamplerKind::Srk => Some(CoefficientTable::from_widths(&grid.widths())?),
            _ => None,
        };
        Ok(Self { grid, kind, table })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn run(&self, score: &dyn ScoreField, seed: u64, record_trajectory: bool) -> Result<Trajectory> {
        let h = score.horizon();
        if (h - self.grid.horizon).abs() > 1e-12 * self.grid.horizon.abs().max(1.0) {
            return Err(Error::Invalid(format!(
                "score horizon {h} does not match grid horizon {}",
                self.grid.horizon
            )));
        }
        let d = score.dim();
        let counted = CountingScore::new(score);
        let noise = NoiseStream::new(seed);
        let steps = self.grid.steps();

        let mut state = noise.normals(0, SLOT_INIT, d);
        let mut states = Vec::with_capacity(if record_trajectory { steps + 1 } else { 1 });
        if record_trajectory {
            states.push(state.clone());
        }
        let mut g1 = vec![0.0; d];
        let mut g3 = vec![0.0; d];
        let mut next = vec![0.0; d];
        for k in 0..steps {
            let t_k = self.grid.times[k];
            let width = self.grid.width(k);
            let stream_step = k as u64 + 1;
            noise.fill_normals(stream_step, SLOT_G1, &mut g1);
            match self.kind {
                SamplerKind::Srk => {
                    let c = self.table.as_ref().expect("srk table").get(k);
                    noise.fill_normals(stream_step, SLOT_G3, &mut g3);
                    rk_update(
                        &state,
                        c.inv_sqrt_alpha(),
                        c.one_minus_alpha(),
                        [c.zeta1, c.zeta2, c.zeta3],
                        &counted,
                        t_k,
                        &g1,
                        &g3,
                        &mut next,
                    )?;
                }
                SamplerKind::LimitVariant => {
                    noise.fill_normals(stream_step, SLOT_G3, &mut g3);
                    let z = width.sqrt();
                    rk_update(
                        &state,
                        width.exp(),
                        -(-2.0 * width).exp_m1(),
                        [z, z, z],
                        &counted,
                        t_k,
                        &g1,
                        &g3,
                        &mut next,
                    )?;
                }
                SamplerKind::DdpmEi => {
                    ddpm_update(&state, width, &counted, t_k, &g1, &mut next)?;
                }
            }
            std::mem::swap(&mut state, &mut next);
            check_finite(&state, k)?;
            if record_trajectory {
                states.push(state.clone());
            }
        }
        if !record_trajectory {
            states.push(state);
        }
        Ok(Trajectory { states, nfe: counted.calls() })
    }

    /// Final states for each seed, in seed order.
    pub fn sample_many(&self, score: &dyn ScoreField, seeds: &[u64]) -> Result<Vec<Vec<f64>>> {
        seeds
            .par_iter()
            .map(|&s| self.run(score, s, false).map(|t| t.states.into_iter().next_back().unwrap()))
            .collect()
    }
}

pub struct SamplerRun<'a> {
    pub grid: &'a TimeGrid,
    pub kind: SamplerKind,
    pub score: &'a dyn ScoreField,
    pub seed: u64,
    pub record_trajectory: bool,
}

pub fn run_sampler(run: &SamplerRun<'_>) -> Result<Trajectory> {
    Sampler::new(run.grid.clone(), run.kind)?.run(run.score, run.seed, run.record_trajectory)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub kind: SamplerKind,
    pub seed: u64,
    #[serde(rename = "K")]
    pub steps: usize,
    pub d: usize,
    pub nfe: usize,
    pub record_trajectory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub seed: u64,
    pub step: usize,
    pub state: Vec<f64>,
}

/// One header line followed by one line per recorded state.
pub fn write_trajectory_jsonl<W: Write>(
    mut w: W,
    header: &TrajectoryHeader,
    traj: &Trajectory,
) -> Result<()> {
    writeln!(w, "{}", serde_json::to_string(header)?)?;
    let first_step = header.steps + 1 - traj.states.len();
    for (i, s) in traj.states.iter().enumerate() {
        let rec = StateRecord { seed: header.seed, step: first_step + i, state: s.clone() };
        writeln!(w, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(())
}
