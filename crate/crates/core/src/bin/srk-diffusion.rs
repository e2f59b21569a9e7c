use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use srk_diffusion::commands::{
    cmd_sample, cmd_schedule, cmd_sweep_dim, cmd_sweep_steps, exit_code, EXIT_FAILED, EXIT_OK,
    EXIT_USAGE,
};
use srk_diffusion::config::{RunConfig, ScheduleConfig, SeedSpec, StepList};
use srk_diffusion::kernel::coefficients;
use srk_diffusion::validate::cmd_validate;
use srk_diffusion::{Error, Result};

#[derive(Parser)]
#[command(name = "srk-diffusion", version, about = "SRK and DDPM samplers for OU diffusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a time grid and check it
    Schedule(ScheduleArgs),
    /// Run samplers and write JSON-lines states
    Sample(SampleArgs),
    /// Error against the number of steps
    SweepSteps(SweepArgs),
    /// Error and step count against dimension
    SweepDim(SweepArgs),
    /// Run the invariant battery
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ScheduleArgs {
    /// Config whose `schedule` (and target dimension) to use
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Uniform grid instead of the corollary grid
    #[arg(long)]
    uniform: bool,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long = "K")]
    steps: Option<usize>,
    /// Write the grid as JSON
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    record_trajectory: bool,
    /// Replace the configured seeds
    #[arg(long = "seed")]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write zero wall times for byte-identical output
    #[arg(long)]
    no_wall_time: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    json: bool,
}

fn schedule_from_args(a: &ScheduleArgs) -> Result<(ScheduleConfig, usize)> {
    let base = match &a.config {
        Some(p) => {
            let c = RunConfig::load(p)?;
            let d = c.target.as_ref().map(|t| t.dim());
            Some((c.schedule, d))
        }
        None => None,
    };
    let d = a.d.or(base.as_ref().and_then(|b| b.1)).unwrap_or(1);
    let missing = |name: &str| Error::Config(format!("--{name} is required"));
    let schedule = if a.uniform {
        let (bt, bk, bd) = match &base {
            Some((ScheduleConfig::Uniform { horizon, steps, delta }, _)) => {
                (Some(*horizon), steps.to_vec().first().copied(), Some(*delta))
            }
            _ => (None, None, None),
        };
        ScheduleConfig::Uniform {
            horizon: a.horizon.or(bt).ok_or_else(|| missing("T"))?,
            steps: StepList::One(a.steps.or(bk).ok_or_else(|| missing("K"))?),
            delta: a.delta.or(bd).ok_or_else(|| missing("delta"))?,
        }
    } else {
        let (be, bd, bk, bt, bm) = match &base {
            Some((ScheduleConfig::Corollary { eps, delta, kappa, horizon, max_steps, .. }, _)) => {
                (Some(*eps), Some(*delta), *kappa, *horizon, *max_steps)
            }
            _ => (None, None, None, None, None),
        };
        ScheduleConfig::Corollary {
            d: Some(d),
            eps: a.eps.or(be).ok_or_else(|| missing("eps"))?,
            delta: a.delta.or(bd).ok_or_else(|| missing("delta"))?,
            kappa: a.kappa.or(bk),
            horizon: a.horizon.or(bt),
            max_steps: bm,
        }
    };
    Ok((schedule, d))
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Schedule(a) => {
            let (schedule, d) = schedule_from_args(&a)?;
            let mut text = Vec::new();
            let summary = cmd_schedule(&schedule, d, a.output.as_deref(), &mut text)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{}", String::from_utf8_lossy(&text));
            }
            Ok(if summary.passed { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Sample(a) => {
            let mut c = RunConfig::load(&a.config)?;
            if a.output.is_some() {
                c.output = a.output;
            }
            c.record_trajectory |= a.record_trajectory;
            if !a.seeds.is_empty() {
                c.seeds = SeedSpec::List(a.seeds);
            }
            cmd_sample(&c)?;
            Ok(EXIT_OK)
        }
        Command::SweepSteps(a) => {
            cmd_sweep_steps(&sweep_config(a)?)?;
            Ok(EXIT_OK)
        }
        Command::SweepDim(a) => {
            cmd_sweep_dim(&sweep_config(a)?)?;
            Ok(EXIT_OK)
        }
        Command::Validate(a) => {
            let suite = cmd_validate(coefficients, a.json, &mut io::stdout())?;
            Ok(if suite.all_passed() { EXIT_OK } else { EXIT_FAILED })
        }
    }
}

fn sweep_config(a: SweepArgs) -> Result<RunConfig> {
    let mut c = RunConfig::load(&a.config)?;
    if a.output.is_some() {
        c.output = a.output;
    }
    if a.no_wall_time {
        c.record_wall_time = false;
    }
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code.clamp(0, EXIT_USAGE) as u8)
}
