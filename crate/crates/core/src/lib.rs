//! Stochastic Runge-Kutta and exponential-integrator samplers for
//! Ornstein-Uhlenbeck diffusion models, with exact Gaussian oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod score;
pub mod validate;

pub use error::{Error, Result};
pub use kernel::{coefficients, covariance_functions, kernel_scalars, CoefficientSet, CoefficientTable};
pub use oracle::{exact_output_law, gaussian_kl, q_delta_law, GaussianLaw};
pub use sampler::{run_sampler, Sampler, SamplerKind, SamplerRun, Trajectory};
pub use schedule::{build_corollary_grid, build_uniform_grid, validate_assumptions, ScheduleParams, TimeGrid};
pub use score::{AnalyticScore, PerturbationSpec, PerturbedScore, ProjectedScore, ScoreField, TargetSpec};
