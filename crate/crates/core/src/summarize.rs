//! Single-snapshot summaries: hypothetical states that minimize or maximize
//! an eigenfunction.
//!
//! The objective is the real part of `phi`. Each iteration proposes
//! `x + s * eta * grad Re phi(x)` (with `s = +1` to maximize, `-1` to minimize),
//! clamps it into the box, and accepts it only if the objective strictly
//! improves. A rejected step shrinks `eta`; an accepted one grows it up to
//! `10 * eta0`. The accepted values therefore form a monotone trace.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{EigenDecomposition, Eigenfunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Minimize => -1.0,
            Direction::Maximize => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub eta0: f64,
    pub eta_min: f64,
    pub shrink: f64,
    pub grow: f64,
    pub max_iters: usize,
    /// Absolute objective improvement below which an accepted step ends the
    /// run. Eigenfunctions are scaled to unit maximum modulus on the training
    /// data, so this is relative to the eigenfunction's own scale.
    pub tol: f64,
    pub bounds: Option<(f64, f64)>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self::with_bounds(None)
    }
}

impl OptimizeConfig {
    /// Defaults scaled to the box: `eta0 = 0.1 * (hi - lo)` (or 0.1 without a
    /// box) and `eta_min = 1e-8 * eta0`.
    pub fn with_bounds(bounds: Option<(f64, f64)>) -> Self {
        let range = bounds.map_or(1.0, |(lo, hi)| hi - lo);
        let eta0 = 0.1 * if range > 0.0 { range } else { 1.0 };
        Self {
            eta0,
            eta_min: 1e-8 * eta0,
            shrink: 0.5,
            grow: 1.1,
            max_iters: 10_000,
            tol: 1e-10,
            bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.eta_min > 0.0 && self.eta0 >= self.eta_min && self.eta0.is_finite()) {
            return bad(format!(
                "need eta0 >= eta_min > 0, got eta0 {} and eta_min {}",
                self.eta0, self.eta_min
            ));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad(format!("shrink must lie in (0, 1), got {}", self.shrink));
        }
        if !(self.grow >= 1.0 && self.grow.is_finite()) {
            return bad(format!("grow must be at least 1, got {}", self.grow));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.tol >= 0.0) {
            return bad(format!("tol must be nonnegative, got {}", self.tol));
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo <= hi) {
                return bad(format!("invalid bounds [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// `Re phi` after the step.
    pub value: f64,
    /// Step size used for this step.
    pub eta: f64,
    /// `Im phi`, for diagnostics only.
    pub imag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub x_star: Vec<f64>,
    pub value: f64,
    pub imag: f64,
    /// Accepted (improving) steps.
    pub iterations: usize,
    /// All proposals, accepted or not.
    pub evaluations: usize,
    /// Initial point followed by every accepted step.
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub direction: Direction,
    pub final_eta: f64,
}

impl OptimizationResult {
    /// `iteration,value,eta,imag` with a header line.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,value,eta,imag\n");
        for p in &self.trace {
            out.push_str(&format!("{},{},{},{}\n", p.iteration, p.value, p.eta, p.imag));
        }
        out
    }
}

pub fn optimize(
    ef: &Eigenfunction,
    x0: &[f64],
    direction: Direction,
    cfg: &OptimizeConfig,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    if x0.len() != ef.dim() {
        return Err(Error::DimensionMismatch {
            expected: ef.dim(),
            actual: x0.len(),
        });
    }
    if let Some((lo, hi)) = cfg.bounds {
        if let Some(v) = x0.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "start value {v} outside bounds [{lo}, {hi}]"
            )));
        }
    }
    let sign = direction.sign();
    let clamp = |v: f64| match cfg.bounds {
        Some((lo, hi)) => v.clamp(lo, hi),
        None => v,
    };

    let mut x = x0.to_vec();
    let mut grad = vec![0.0; x.len()];
    let mut value = ef.value_and_real_grad(&x, &mut grad);
    if !finite(value.re, &grad) {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut eta = cfg.eta0;
    let eta_max = 10.0 * cfg.eta0;
    let mut trace = vec![TracePoint {
        iteration: 0,
        value: value.re,
        eta,
        imag: value.im,
    }];
    let mut cand = vec![0.0; x.len()];
    let mut cand_grad = vec![0.0; x.len()];
    let mut accepted = 0;
    let mut evaluations = 0;
    let mut converged = false;

    while evaluations < cfg.max_iters {
        if grad.iter().all(|&g| g == 0.0) {
            converged = true;
            break;
        }
        evaluations += 1;
        for ((c, xi), g) in cand.iter_mut().zip(&x).zip(&grad) {
            *c = clamp(xi + sign * eta * g);
        }
        let cand_value = ef.value_and_real_grad(&cand, &mut cand_grad);
        if !finite(cand_value.re, &cand_grad) {
            return Err(Error::NonFiniteObjective {
                iteration: evaluations,
            });
        }
        let gain = sign * (cand_value.re - value.re);
        if gain > 0.0 {
            std::mem::swap(&mut x, &mut cand);
            std::mem::swap(&mut grad, &mut cand_grad);
            value = cand_value;
            accepted += 1;
            trace.push(TracePoint {
                iteration: evaluations,
                value: value.re,
                eta,
                imag: value.im,
            });
            eta = (eta * cfg.grow).min(eta_max);
            if gain < cfg.tol {
                converged = true;
                break;
            }
        } else {
            eta *= cfg.shrink;
            if eta < cfg.eta_min {
                converged = true;
                break;
            }
        }
    }

    Ok(OptimizationResult {
        x_star: x,
        value: value.re,
        imag: value.im,
        iterations: accepted,
        evaluations,
        trace,
        converged,
        direction,
        final_eta: eta,
    })
}

fn finite(value: f64, grad: &[f64]) -> bool {
    value.is_finite() && grad.iter().all(|g| g.is_finite())
}

/// Where optimization runs start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPolicy {
    /// The training snapshot with the smallest (for minimization) or largest
    /// (for maximization) value of `Re phi`.
    #[default]
    BestObserved,
    /// The mean training snapshot.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPair {
    pub index: usize,
    pub min: OptimizationResult,
    pub max: OptimizationResult,
}

/// Minimizes and maximizes each listed eigenfunction (indices from 1).
/// Runs are independent and execute in parallel; output order follows
/// `indices`.
pub fn summarize_all(
    decomp: &EigenDecomposition,
    indices: &[usize],
    starts: StartPolicy,
    cfg: &OptimizeConfig,
) -> Result<Vec<SummaryPair>> {
    cfg.validate()?;
    let training = decomp.training_x();
    let series = decomp.series(training, indices)?;
    let mean = training.mean_snapshot();
    let clamp_start = |x: &[f64]| -> Vec<f64> {
        match cfg.bounds {
            Some((lo, hi)) => x.iter().map(|v| v.clamp(lo, hi)).collect(),
            None => x.to_vec(),
        }
    };

    let mut tasks = Vec::with_capacity(indices.len() * 2);
    for (&index, values) in indices.iter().zip(&series) {
        for direction in [Direction::Minimize, Direction::Maximize] {
            let start = match starts {
                StartPolicy::Mean => clamp_start(&mean),
                StartPolicy::BestObserved => {
                    let pick = values
                        .iter()
                        .enumerate()
                        .max_by(|a, b| {
                            let o = (direction.sign() * a.1.re).total_cmp(&(direction.sign() * b.1.re));
                            o.then(b.0.cmp(&a.0))
                        })
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    clamp_start(training.snapshot(pick))
                }
            };
            tasks.push((index, direction, start));
        }
    }

    let results = tasks
        .into_par_iter()
        .map(|(index, direction, start)| {
            let ef = decomp.eigenfunction(index)?;
            optimize(&ef, &start, direction, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut it = results.into_iter();
    Ok(indices
        .iter()
        .map(|&index| SummaryPair {
            index,
            min: it.next().unwrap(),
            max: it.next().unwrap(),
        })
        .collect())
}
