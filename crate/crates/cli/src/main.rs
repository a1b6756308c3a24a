use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use kto_core::{Preprocess, StartPolicy};
use serde::Serialize;
use serde_json::Value;

mod commands;
mod config;
mod output;

use commands::{
    ChangepointsConfig, DmdConfig, FitConfig, InputFormat, KernelKind, OperatorChoice,
    SimulateConfig, StatisticKind, SummarizeConfig, System,
};
use config::{overlay, resolve};

#[derive(Parser)]
#[command(name = "kto", version, about = "Kernel transfer operator analysis of snapshot data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic triple-well trajectory or pendulum video.
    Simulate(SimulateArgs),
    /// Estimate Koopman or Perron-Frobenius eigenpairs from a trajectory.
    Fit(FitArgs),
    /// Optimize eigenfunctions to obtain extreme summary snapshots.
    Summarize(SummarizeArgs),
    /// Detect jumps in eigenfunction series along a trajectory.
    Changepoints(ChangepointsArgs),
    /// Exact dynamic mode decomposition baseline.
    Dmd(DmdArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory; must not exist unless --force is given.
    #[arg(long)]
    out: PathBuf,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
    /// JSON config file (an echoed config.json, a sectioned file or a bare object).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in parameter set: triple-well, pendulum-synth (alias pendulum) or video.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct InputArgs {
    /// Trajectory file or frame directory.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Time between stored snapshots.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_parser = parse_preprocess)]
    preprocess: Option<Preprocess>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    system: Option<System>,
    /// Integration steps (triple well).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Integration step (triple well).
    #[arg(long)]
    dt: Option<f64>,
    /// Diffusion constant D (triple well).
    #[arg(long)]
    diffusion: Option<f64>,
    /// Keep every n-th integration step (triple well).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    stride: Option<u64>,
    /// Initial position (triple well).
    #[arg(long)]
    x0: Option<f64>,
    /// Comma-separated polynomial coefficients, constant term first (triple well).
    #[arg(long, value_delimiter = ',')]
    potential: Option<Vec<f64>>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    frames: Option<u64>,
    #[arg(long)]
    width: Option<u64>,
    #[arg(long)]
    height: Option<u64>,
    /// Oscillation period in frames (pendulum).
    #[arg(long)]
    period: Option<u64>,
    /// Horizontal amplitude in pixels (pendulum).
    #[arg(long)]
    amplitude: Option<f64>,
    /// Standard deviation of additive pixel noise (pendulum).
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    kernel: Option<KernelKind>,
    /// Gaussian bandwidth, or "auto" for the median pairwise distance.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    operator: Option<OperatorChoice>,
    /// Lag in stored steps.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    lag: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    num_eigs: Option<u64>,
    /// Thin the pairs evenly so that at most this many remain.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_pairs: Option<u64>,
}

#[derive(Args)]
struct SummarizeArgs {
    #[command(flatten)]
    common: Common,
    /// decomposition.json written by `fit`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Comma-separated 1-based eigen indices.
    #[arg(long, value_delimiter = ',')]
    indices: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_start)]
    start: Option<StartPolicy>,
    /// Lower box bound for every snapshot entry (needs --hi).
    #[arg(long, requires = "hi", allow_hyphen_values = true)]
    lo: Option<f64>,
    /// Upper box bound for every snapshot entry (needs --lo).
    #[arg(long, requires = "lo", allow_hyphen_values = true)]
    hi: Option<f64>,
    #[arg(long)]
    eta0: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct ChangepointsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',')]
    indices: Option<Vec<usize>>,
    #[arg(long)]
    rel_threshold: Option<f64>,
    #[arg(long)]
    min_separation: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    stride: Option<u64>,
    #[arg(long, value_enum)]
    statistic: Option<StatisticKind>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
struct DmdArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    lag: Option<u64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    svd_tol: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_pairs: Option<u64>,
}

fn parse_preprocess(s: &str) -> Result<Preprocess, String> {
    serde_json::from_value(Value::String(s.to_owned()))
        .map_err(|_| "expected none, center or standardize".to_owned())
}

fn parse_start(s: &str) -> Result<StartPolicy, String> {
    serde_json::from_value(Value::String(s.to_owned()))
        .map_err(|_| "expected best-observed or mean".to_owned())
}

fn v<T: Serialize>(x: Option<T>) -> Option<Value> {
    x.map(|x| serde_json::to_value(x).expect("flag values serialize"))
}

fn input_overlay(a: &InputArgs) -> Vec<(&'static str, Option<Value>)> {
    vec![
        ("input", v(a.input.as_ref())),
        ("format", v(a.format)),
        ("dt", v(a.dt)),
        ("preprocess", v(a.preprocess)),
    ]
}

fn simulate(a: SimulateArgs) -> Result<PathBuf> {
    let c = &a.common;
    // The system decides which section system-specific flags land in, so it
    // is resolved first.
    let probe: SimulateConfig = resolve(
        &SimulateConfig::default(),
        "simulate",
        c.preset.as_deref(),
        c.config.as_deref(),
        overlay(vec![("system", v(a.system))]),
    )?;
    let flags = match probe.system {
        System::TripleWell => overlay(vec![
            ("system", v(a.system)),
            ("triple_well.n_steps", v(a.steps)),
            ("triple_well.seed", v(a.seed)),
            ("triple_well.dt", v(a.dt)),
            ("triple_well.diffusion", v(a.diffusion)),
            ("triple_well.store_stride", v(a.stride)),
            ("triple_well.x0", v(a.x0)),
            ("triple_well.potential", v(a.potential)),
        ]),
        System::Pendulum => overlay(vec![
            ("system", v(a.system)),
            ("pendulum.n_frames", v(a.frames)),
            ("pendulum.seed", v(a.seed)),
            ("pendulum.width", v(a.width)),
            ("pendulum.height", v(a.height)),
            ("pendulum.period_frames", v(a.period)),
            ("pendulum.amplitude_px", v(a.amplitude)),
            ("pendulum.noise_sigma", v(a.noise)),
        ]),
    };
    let cfg: SimulateConfig = resolve(
        &SimulateConfig::default(),
        "simulate",
        c.preset.as_deref(),
        c.config.as_deref(),
        flags,
    )?;
    commands::run_simulate(&cfg, &c.out, c.force)
}

fn fit(a: FitArgs) -> Result<PathBuf> {
    let sigma = match a.sigma.as_deref() {
        None => None,
        Some("auto") => Some(Value::Null),
        Some(s) => Some(Value::from(s.parse::<f64>().map_err(|_| {
            anyhow::anyhow!("--sigma expects a number or \"auto\", got {s:?}")
        })?)),
    };
    let mut flags = input_overlay(&a.input);
    flags.extend([
        ("kernel", v(a.kernel)),
        ("sigma", sigma),
        ("degree", v(a.degree)),
        ("offset", v(a.offset)),
        ("epsilon", v(a.epsilon)),
        ("operator", v(a.operator)),
        ("lag", v(a.lag)),
        ("num_eigs", v(a.num_eigs)),
        ("max_pairs", v(a.max_pairs)),
    ]);
    let c = &a.common;
    let cfg: FitConfig =
        resolve(&FitConfig::default(), "fit", c.preset.as_deref(), c.config.as_deref(), overlay(flags))?;
    commands::run_fit(&cfg, &c.out, c.force)
}

fn summarize(a: SummarizeArgs) -> Result<PathBuf> {
    let bounds = a.lo.zip(a.hi);
    let flags = overlay(vec![
        ("model", v(a.model)),
        ("indices", v(a.indices)),
        ("start", v(a.start)),
        ("bounds", v(bounds)),
        ("eta0", v(a.eta0)),
        ("max_iters", v(a.max_iters)),
        ("tol", v(a.tol)),
    ]);
    let c = &a.common;
    let cfg: SummarizeConfig =
        resolve(&SummarizeConfig::default(), "summarize", c.preset.as_deref(), c.config.as_deref(), flags)?;
    commands::run_summarize(&cfg, &c.out, c.force)
}

fn changepoints(a: ChangepointsArgs) -> Result<PathBuf> {
    let mut flags = input_overlay(&a.input);
    flags.extend([
        ("model", v(a.model)),
        ("indices", v(a.indices)),
        ("rel_threshold", v(a.rel_threshold)),
        ("min_separation", v(a.min_separation)),
        ("stride", v(a.stride)),
        ("statistic", v(a.statistic)),
        ("window", v(a.window)),
    ]);
    let c = &a.common;
    let cfg: ChangepointsConfig = resolve(
        &ChangepointsConfig::default(),
        "changepoints",
        c.preset.as_deref(),
        c.config.as_deref(),
        overlay(flags),
    )?;
    commands::run_changepoints(&cfg, &c.out, c.force)
}

fn dmd(a: DmdArgs) -> Result<PathBuf> {
    let mut flags = input_overlay(&a.input);
    flags.extend([
        ("lag", v(a.lag)),
        ("rank", v(a.rank)),
        ("svd_tol", v(a.svd_tol)),
        ("max_pairs", v(a.max_pairs)),
    ]);
    let c = &a.common;
    let cfg: DmdConfig =
        resolve(&DmdConfig::default(), "dmd", c.preset.as_deref(), c.config.as_deref(), overlay(flags))?;
    commands::run_dmd(&cfg, &c.out, c.force)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(a) => &a.common,
        Command::Fit(a) => &a.common,
        Command::Summarize(a) => &a.common,
        Command::Changepoints(a) => &a.common,
        Command::Dmd(a) => &a.common,
    };
    // Fail before any computation rather than after it.
    if common.out.exists() && !common.force {
        eprintln!(
            "error: output directory {} already exists (use --force to replace it)",
            common.out.display()
        );
        return ExitCode::FAILURE;
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Summarize(a) => summarize(a),
        Command::Changepoints(a) => changepoints(a),
        Command::Dmd(a) => dmd(a),
    };
    match result {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
