//! Resolved per-command configurations and their runners.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kto_core::changepoint::JumpStatistic;
use kto_core::kernels::median_pairwise_distance;
use kto_core::tensordata::{self, Format};
use kto_core::{
    detect_with, exact_dmd, fit, render_pendulum, simulate, summarize_all, DetectConfig,
    EigenDecomposition, KernelSpec, OperatorKind, OptimizeConfig, PairedDataset, PendulumConfig,
    Preprocess, SdeConfig, SnapshotSet, StartPolicy,
};
use serde::{Deserialize, Serialize};

use crate::config::echo;
use crate::output::{eigenvalue_csv, series_csv, Staging};

/// Snapshots used for the bandwidth heuristic when no sigma is given.
const MEDIAN_SAMPLE: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    #[default]
    Auto,
    Csv,
    CsvHeader,
    Kto,
    Pgm,
    Ppm,
}

impl InputFormat {
    fn resolve(self, path: &Path) -> Result<Format> {
        Ok(match self {
            InputFormat::Auto => Format::infer(path)?,
            InputFormat::Csv => Format::Csv { header: false },
            InputFormat::CsvHeader => Format::Csv { header: true },
            InputFormat::Kto => Format::Kto1,
            InputFormat::Pgm => Format::Pgm,
            InputFormat::Ppm => Format::Ppm,
        })
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let Some(path) = path.as_deref() else {
        bail!("no {what} given");
    };
    if !path.exists() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(path)
}

fn load_input(
    path: &Option<PathBuf>,
    format: InputFormat,
    dt: Option<f64>,
    preprocess: Preprocess,
) -> Result<SnapshotSet> {
    let path = required(path, "input")?;
    let mut set = tensordata::load(path, format.resolve(path)?)
        .with_context(|| format!("loading {}", path.display()))?;
    if let Some(dt) = dt {
        set = set.with_dt(dt)?;
    }
    Ok(set.preprocess(preprocess))
}

/// Pairs at lag `lag`, thinned so that at most `max_pairs` remain.
fn pairs(traj: &SnapshotSet, lag: usize, max_pairs: Option<usize>) -> Result<PairedDataset> {
    let stride = match max_pairs {
        Some(0) => bail!("max_pairs must be positive"),
        Some(m) if traj.count() > lag => (traj.count() - lag).div_ceil(m),
        _ => 1,
    };
    Ok(PairedDataset::from_trajectory_strided(traj, lag, stride)?)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    #[default]
    TripleWell,
    Pendulum,
}

/// Both systems' parameters are always present; `system` picks the one
/// that runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: System,
    pub triple_well: SdeConfig,
    pub pendulum: PendulumConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            system: System::TripleWell,
            triple_well: SdeConfig::triple_well_default(),
            pendulum: PendulumConfig::default(),
        }
    }
}

pub fn run_simulate(cfg: &SimulateConfig, out: &Path, force: bool) -> Result<PathBuf> {
    match cfg.system {
        System::TripleWell => {
            let sim = simulate(&cfg.triple_well)?;
            let staging = Staging::new(out, force)?;
            tensordata::save(&sim.trajectory, &staging.path("trajectory.kto"), Format::Kto1)?;
            tensordata::save(
                &sim.trajectory,
                &staging.path("trajectory.csv"),
                Format::Csv { header: true },
            )?;
            staging.write("labels.csv", sim.labels.to_csv())?;
            staging.write("config.json", echo("simulate", cfg)?)?;
            staging.commit()
        }
        System::Pendulum => {
            let frames = render_pendulum(&cfg.pendulum)?;
            let staging = Staging::new(out, force)?;
            tensordata::save(&frames, &staging.path("frames.kto"), Format::Kto1)?;
            tensordata::save(&frames, &staging.path("frames"), Format::Pgm)?;
            staging.write("config.json", echo("simulate", cfg)?)?;
            staging.commit()
        }
    }
}

// --------------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorChoice {
    Koopman,
    #[value(alias = "perron-frobenius")]
    Pf,
}

impl From<OperatorChoice> for OperatorKind {
    fn from(c: OperatorChoice) -> Self {
        match c {
            OperatorChoice::Koopman => OperatorKind::Koopman,
            OperatorChoice::Pf => OperatorKind::PerronFrobenius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    /// Time between stored snapshots; lag steps count when absent.
    pub dt: Option<f64>,
    pub preprocess: Preprocess,
    pub kernel: KernelKind,
    /// Gaussian bandwidth; the median pairwise distance when absent.
    pub sigma: Option<f64>,
    pub degree: u32,
    pub offset: f64,
    pub epsilon: f64,
    pub operator: OperatorChoice,
    pub lag: usize,
    pub num_eigs: usize,
    pub max_pairs: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            input: None,
            format: InputFormat::Auto,
            dt: None,
            preprocess: Preprocess::None,
            kernel: KernelKind::Gaussian,
            sigma: None,
            degree: 2,
            offset: 1.0,
            epsilon: 0.1,
            operator: OperatorChoice::Koopman,
            lag: 1,
            num_eigs: 10,
            max_pairs: None,
        }
    }
}

/// The echoed configuration records the bandwidth and eigenpair count
/// actually used.
pub fn run_fit(cfg: &FitConfig, out: &Path, force: bool) -> Result<PathBuf> {
    let traj = load_input(&cfg.input, cfg.format, cfg.dt, cfg.preprocess)?;
    let data = pairs(&traj, cfg.lag, cfg.max_pairs)?;
    let mut used = cfg.clone();
    let kernel = match cfg.kernel {
        KernelKind::Gaussian => {
            let sigma = match cfg.sigma {
                Some(s) => s,
                None => median_pairwise_distance(data.x(), MEDIAN_SAMPLE),
            };
            used.sigma = Some(sigma);
            KernelSpec::gaussian(sigma)?
        }
        KernelKind::Polynomial => KernelSpec::polynomial(cfg.degree, cfg.offset)?,
    };
    // Small inputs cannot supply more eigenpairs than pairs.
    used.num_eigs = cfg.num_eigs.min(data.count());
    let decomp = fit(&data, kernel, cfg.epsilon, cfg.operator.into(), Some(used.num_eigs))?;
    let indices: Vec<usize> = (1..=decomp.num_eigs()).collect();
    let series = decomp.series(&traj, &indices)?;

    let staging = Staging::new(out, force)?;
    decomp.save_json(&staging.path("decomposition.json"), &staging.path("training.kto"))?;
    staging.write("eigenvalues.csv", eigenvalue_csv(decomp.eigenvalues(), decomp.lag_time()))?;
    staging.write("series.csv", series_csv(&indices, &series))?;
    staging.write("config.json", echo("fit", &used)?)?;
    staging.commit()
}

// --------------------------------------------------------------- summarize

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizeConfig {
    pub model: Option<PathBuf>,
    pub indices: Vec<usize>,
    pub start: StartPolicy,
    pub bounds: Option<(f64, f64)>,
    /// Initial step; a tenth of the box width when absent.
    pub eta0: Option<f64>,
    /// Smallest step tried; `1e-8 * eta0` when absent.
    pub eta_min: Option<f64>,
    pub shrink: f64,
    pub grow: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        let base = OptimizeConfig::default();
        Self {
            model: None,
            indices: vec![2],
            start: StartPolicy::BestObserved,
            bounds: None,
            eta0: None,
            eta_min: None,
            shrink: base.shrink,
            grow: base.grow,
            max_iters: base.max_iters,
            tol: base.tol,
        }
    }
}

impl SummarizeConfig {
    fn optimizer(&self) -> OptimizeConfig {
        let mut opt = OptimizeConfig::with_bounds(self.bounds);
        if let Some(eta0) = self.eta0 {
            opt.eta0 = eta0;
            opt.eta_min = 1e-8 * eta0;
        }
        if let Some(eta_min) = self.eta_min {
            opt.eta_min = eta_min;
        }
        opt.shrink = self.shrink;
        opt.grow = self.grow;
        opt.max_iters = self.max_iters;
        opt.tol = self.tol;
        opt
    }
}

#[derive(Serialize)]
struct RunSummary {
    value: f64,
    imag: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    final_eta: f64,
    snapshot: String,
    trace: String,
}

#[derive(Serialize)]
struct IndexSummary {
    index: usize,
    eigenvalue: [f64; 2],
    min: RunSummary,
    max: RunSummary,
}

pub fn run_summarize(cfg: &SummarizeConfig, out: &Path, force: bool) -> Result<PathBuf> {
    let model = required(&cfg.model, "model")?;
    let decomp = EigenDecomposition::load_json(model)
        .with_context(|| format!("loading {}", model.display()))?;
    let opt = cfg.optimizer();
    let results = summarize_all(&decomp, &cfg.indices, cfg.start, &opt)?;
    let shape = decomp.training_x().shape().to_vec();
    let images = shape.len() == 2
        && cfg.bounds.is_some_and(|(lo, hi)| lo >= 0.0 && hi <= 255.0);

    let staging = Staging::new(out, force)?;
    let mut summary = Vec::new();
    for pair in &results {
        let k = pair.index;
        let mut runs = Vec::new();
        for (tag, r) in [("min", &pair.min), ("max", &pair.max)] {
            let snapshot = format!("summary_{k}_{tag}.kto");
            let trace = format!("trace_{k}_{tag}.csv");
            let set = SnapshotSet::new(shape.clone(), r.x_star.clone())?;
            tensordata::save(&set, &staging.path(&snapshot), Format::Kto1)?;
            staging.write(&trace, r.trace_csv())?;
            runs.push(RunSummary {
                value: r.value,
                imag: r.imag,
                iterations: r.iterations,
                evaluations: r.evaluations,
                converged: r.converged,
                final_eta: r.final_eta,
                snapshot,
                trace,
            });
        }
        if images {
            let mut both = pair.min.x_star.clone();
            both.extend_from_slice(&pair.max.x_star);
            let set = SnapshotSet::new(shape.clone(), both)?;
            tensordata::save(&set, &staging.path(&format!("summary_{k}_frames")), Format::Pgm)?;
        }
        let max = runs.pop().expect("two runs");
        let min = runs.pop().expect("two runs");
        let lambda = decomp.eigenvalues()[k - 1];
        summary.push(IndexSummary {
            index: k,
            eigenvalue: [lambda.re, lambda.im],
            min,
            max,
        });
    }
    staging.write("summary.json", serde_json::to_string_pretty(&summary)? + "\n")?;
    staging.write("config.json", echo("summarize", cfg)?)?;
    staging.commit()
}

// ------------------------------------------------------------ changepoints

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    #[default]
    FirstDifference,
    RollingMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangepointsConfig {
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    pub dt: Option<f64>,
    pub preprocess: Preprocess,
    pub indices: Vec<usize>,
    pub rel_threshold: f64,
    pub min_separation: usize,
    /// Detection runs on every `stride`-th snapshot; reported time indices
    /// refer to the full input.
    pub stride: usize,
    pub statistic: StatisticKind,
    /// Rolling-median window, used by `rolling-median` only.
    pub window: usize,
}

impl Default for ChangepointsConfig {
    fn default() -> Self {
        let base = DetectConfig::default();
        Self {
            model: None,
            input: None,
            format: InputFormat::Auto,
            dt: None,
            preprocess: Preprocess::None,
            indices: vec![2, 3],
            rel_threshold: base.rel_threshold,
            min_separation: base.min_separation,
            stride: 1,
            statistic: StatisticKind::FirstDifference,
            window: 5,
        }
    }
}

pub fn run_changepoints(cfg: &ChangepointsConfig, out: &Path, force: bool) -> Result<PathBuf> {
    let model = required(&cfg.model, "model")?;
    let decomp = EigenDecomposition::load_json(model)
        .with_context(|| format!("loading {}", model.display()))?;
    let traj = load_input(&cfg.input, cfg.format, cfg.dt, cfg.preprocess)?;
    if cfg.stride == 0 {
        bail!("stride must be positive");
    }
    let sub = traj.subsample(cfg.stride)?;
    let detect = DetectConfig {
        rel_threshold: cfg.rel_threshold,
        min_separation: cfg.min_separation,
        statistic: match cfg.statistic {
            StatisticKind::FirstDifference => JumpStatistic::FirstDifference,
            StatisticKind::RollingMedian => JumpStatistic::RollingMedian { window: cfg.window },
        },
    };
    let mut report = detect_with(&decomp, &sub, &cfg.indices, &detect)?;
    for e in &mut report.events {
        e.time_index *= cfg.stride;
    }

    let staging = Staging::new(out, force)?;
    staging.write("changepoints.csv", report.to_csv())?;
    staging.write("changepoints.json", report.to_json()? + "\n")?;
    staging.write("config.json", echo("changepoints", cfg)?)?;
    staging.commit()
}

// --------------------------------------------------------------------- dmd

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmdConfig {
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    pub dt: Option<f64>,
    pub preprocess: Preprocess,
    pub lag: usize,
    pub rank: Option<usize>,
    pub svd_tol: f64,
    pub max_pairs: Option<usize>,
}

impl Default for DmdConfig {
    fn default() -> Self {
        Self {
            input: None,
            format: InputFormat::Auto,
            dt: None,
            preprocess: Preprocess::None,
            lag: 1,
            rank: None,
            svd_tol: kto_core::baselines::DEFAULT_SVD_TOL,
            max_pairs: None,
        }
    }
}

pub fn run_dmd(cfg: &DmdConfig, out: &Path, force: bool) -> Result<PathBuf> {
    let traj = load_input(&cfg.input, cfg.format, cfg.dt, cfg.preprocess)?;
    let data = pairs(&traj, cfg.lag, cfg.max_pairs)?;
    let result = exact_dmd(&data, cfg.rank, cfg.svd_tol)?;

    let staging = Staging::new(out, force)?;
    staging.write("dmd.json", result.to_json()? + "\n")?;
    staging.write("eigenvalues.csv", eigenvalue_csv(&result.eigenvalues, data.lag_time()))?;
    staging.write("config.json", echo("dmd", cfg)?)?;
    staging.commit()
}
