//! JSON run configuration shared by the command-line subcommands.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::SamplerKind;
use crate::schedule::{build_corollary_grid, build_uniform_grid, ScheduleParams, TimeGrid};
use crate::score::{PerturbationKind, PerturbationSpec, TargetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepList {
    One(usize),
    Many(Vec<usize>),
}

impl StepList {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            StepList::One(k) => vec![*k],
            StepList::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Corollary {
        /// Defaults to the target dimension.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
        eps: f64,
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
        #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
        horizon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_steps: Option<usize>,
    },
    Uniform {
        #[serde(rename = "T")]
        horizon: f64,
        #[serde(rename = "K")]
        steps: StepList,
        delta: f64,
    },
}

impl ScheduleConfig {
    pub fn corollary_params(&self, default_d: usize) -> Option<ScheduleParams> {
        match self {
            ScheduleConfig::Corollary { d, eps, delta, kappa, horizon, max_steps } => {
                let mut p = ScheduleParams::new(d.unwrap_or(default_d), *eps, *delta);
                p.kappa_override = *kappa;
                p.horizon_override = *horizon;
                if let Some(m) = max_steps {
                    p.max_steps = *m;
                }
                Some(p)
            }
            ScheduleConfig::Uniform { .. } => None,
        }
    }

    /// Grid for a single run; a uniform schedule must name exactly one `K`.
    pub fn single_grid(&self, d: usize) -> Result<TimeGrid> {
        match self {
            ScheduleConfig::Corollary { .. } => {
                build_corollary_grid(&self.corollary_params(d).expect("corollary"))
            }
            ScheduleConfig::Uniform { horizon, steps, delta } => match steps.to_vec().as_slice() {
                [k] => build_uniform_grid(*horizon, *k, *delta),
                _ => Err(Error::Config("a single run needs exactly one K".into())),
            },
        }
    }

    /// One grid per `K` of a uniform schedule, in the listed order.
    pub fn uniform_grids(&self) -> Result<Vec<TimeGrid>> {
        match self {
            ScheduleConfig::Uniform { horizon, steps, delta } => {
                let ks = steps.to_vec();
                if ks.is_empty() {
                    return Err(Error::Config("empty K list".into()));
                }
                ks.iter().map(|k| build_uniform_grid(*horizon, *k, *delta)).collect()
            }
            ScheduleConfig::Corollary { .. } => {
                Err(Error::Config("step sweeps need a uniform schedule with a K list".into()))
            }
        }
    }

    pub fn horizon(&self, d: usize) -> f64 {
        match self {
            ScheduleConfig::Corollary { .. } => self.corollary_params(d).expect("corollary").horizon(),
            ScheduleConfig::Uniform { horizon, .. } => *horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { base: u64, count: usize },
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::List(vec![0])
    }
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { base, count } => (0..*count as u64).map(|i| base.wrapping_add(i)).collect(),
        }
    }

    /// Seed reported in result rows: the base of a range or a lone seed.
    pub fn label(&self) -> Option<u64> {
        match self {
            SeedSpec::List(v) if v.len() == 1 => Some(v[0]),
            SeedSpec::List(_) => None,
            SeedSpec::Range { base, .. } => Some(*base),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    GaussianKl,
    Energy,
    Moments,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::GaussianKl => "gaussian_kl",
            MetricKind::Energy => "energy",
            MetricKind::Moments => "moments",
        })
    }
}

/// Target family indexed by dimension, for dimension sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    IsotropicGaussian {
        #[serde(default)]
        mean: f64,
        var: f64,
    },
    /// Two equally weighted atoms at `±(1, …, 1)`, bounded support asserted.
    SymmetricAtoms,
}

impl FamilySpec {
    pub fn target(&self, d: usize) -> Result<TargetSpec> {
        match self {
            FamilySpec::IsotropicGaussian { mean, var } => TargetSpec::isotropic_gaussian(d, *mean, *var),
            FamilySpec::SymmetricAtoms => {
                TargetSpec::finite(vec![vec![1.0; d], vec![-1.0; d]], vec![0.5, 0.5], true)
            }
        }
    }
}

fn default_samplers() -> Vec<SamplerKind> {
    vec![SamplerKind::Srk, SamplerKind::DdpmEi]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    pub schedule: ScheduleConfig,
    #[serde(default = "default_samplers")]
    pub samplers: Vec<SamplerKind>,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub projection: bool,
    #[serde(default)]
    pub seeds: SeedSpec,
    /// Defaults to `gaussian_kl` for Gaussian targets and `energy` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Direct `q_δ` draws for sample metrics; defaults to the seed count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_samples: Option<usize>,
    #[serde(default)]
    pub reference_seed: u64,
    /// Projections for energy distance on large sets; 0 selects subsampled
    /// index tuples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_directions: Option<usize>,
    /// Index tuples for subsampled energy distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub record_trajectory: bool,
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn metric_for(&self, target: &TargetSpec) -> MetricKind {
        self.metric.unwrap_or(if target.is_gaussian() { MetricKind::GaussianKl } else { MetricKind::Energy })
    }

    pub fn require_target(&self) -> Result<&TargetSpec> {
        self.target.as_ref().ok_or_else(|| Error::Config("config has no target".into()))
    }

    /// Checks that hold for every subcommand taking a target.
    pub fn check_target(&self, target: &TargetSpec) -> Result<()> {
        target.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.samplers.is_empty() {
            return Err(Error::Config("sampler list is empty".into()));
        }
        if self.seeds.seeds().is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if !(self.perturbation.magnitude >= 0.0) || !self.perturbation.magnitude.is_finite() {
            return Err(Error::Config("perturbation magnitude must be nonnegative".into()));
        }
        if self.projection && target.support_radius().is_none() {
            return Err(Error::Config("projection needs a target with bounded support".into()));
        }
        if self.metric_for(target) == MetricKind::GaussianKl {
            if !target.is_gaussian() {
                return Err(Error::Config("gaussian_kl needs a Gaussian target".into()));
            }
            if self.perturbation.kind == PerturbationKind::AdditiveRandomSmooth
                && self.perturbation.magnitude > 0.0
            {
                return Err(Error::Config(
                    "gaussian_kl needs an affine score; additive_random_smooth is not".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_uniform_config() {
        let c = RunConfig::from_json(
            r#"{"target":{"variant":"gaussian","mean":[0,0],"cov":[0.25,0.25]},
                "schedule":{"mode":"uniform","T":4,"K":[16,32],"delta":0.01}}"#,
        )
        .unwrap();
        assert_eq!(c.samplers, vec![SamplerKind::Srk, SamplerKind::DdpmEi]);
        assert_eq!(c.seeds.seeds(), vec![0]);
        assert_eq!(c.metric_for(c.target.as_ref().unwrap()), MetricKind::GaussianKl);
        assert_eq!(c.schedule.uniform_grids().unwrap().len(), 2);
        assert!(c.schedule.single_grid(2).is_err());
        assert!(c.record_wall_time);
    }

    #[test]
    fn seed_forms() {
        let list: SeedSpec = serde_json::from_str("[3, 5]").unwrap();
        assert_eq!(list.seeds(), vec![3, 5]);
        assert_eq!(list.label(), None);
        let range: SeedSpec = serde_json::from_str(r#"{"base":10,"count":3}"#).unwrap();
        assert_eq!(range.seeds(), vec![10, 11, 12]);
        assert_eq!(range.label(), Some(10));
    }

    #[test]
    fn rejects_unknown_fields_and_bad_combinations() {
        assert!(RunConfig::from_json(r#"{"schedule":{"mode":"uniform","T":1,"K":1,"delta":0.1},"bogus":1}"#).is_err());
        let c = RunConfig::from_json(
            r#"{"target":{"variant":"finite","atoms":[[1,0],[-1,0]],"weights":[0.5,0.5]},
                "schedule":{"mode":"corollary","eps":0.5,"delta":0.1},
                "metric":"gaussian_kl"}"#,
        )
        .unwrap();
        assert!(c.check_target(c.target.as_ref().unwrap()).is_err());
        let c = RunConfig { metric: None, projection: true, ..c };
        // bounded flag not asserted
        assert!(c.check_target(c.target.as_ref().unwrap()).is_err());
    }

    #[test]
    fn corollary_defaults_to_target_dimension() {
        let c = ScheduleConfig::Corollary { d: None, eps: 0.5, delta: 0.1, kappa: None, horizon: None, max_steps: None };
        assert_eq!(c.corollary_params(4).unwrap().d, 4);
        assert!((c.horizon(4) - 0.5 * (4.0f64 / 0.25).ln()).abs() < 1e-15);
    }
}
