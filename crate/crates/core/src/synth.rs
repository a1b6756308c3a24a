//! Ground-truth generators: overdamped Langevin dynamics in a polynomial
//! potential, and a rendered pendulum image sequence.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensordata::SnapshotSet;

/// States with `|x|` above this abort the simulation.
pub const BLOWUP_LIMIT: f64 = 1e6;

/// Polynomial potential, coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Potential {
    coefficients: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Potential {
    type Error = Error;

    fn try_from(c: Vec<f64>) -> Result<Self> {
        Self::new(c)
    }
}

impl From<Potential> for Vec<f64> {
    fn from(p: Potential) -> Self {
        p.coefficients
    }
}

impl Potential {
    /// Trailing zero coefficients are dropped. The remaining polynomial must
    /// have even degree >= 2 and a positive leading coefficient.
    pub fn new(mut coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("potential coefficients must be finite".into()));
        }
        while coefficients.last() == Some(&0.0) {
            coefficients.pop();
        }
        let degree = coefficients.len().saturating_sub(1);
        if degree < 2 || degree % 2 == 1 || coefficients[degree] <= 0.0 {
            return Err(Error::InvalidArgument(
                "potential must have even degree >= 2 and a positive leading coefficient".into(),
            ));
        }
        Ok(Self { coefficients })
    }

    /// `V(x) = 2.8 (x^6 - 3.3 x^4 + 2.7 x^2) + 0.15 (x^3 - x)`.
    ///
    /// Minima near -1.30, 0.01 and 1.28 with the left well deepest. Barriers
    /// are about 7 D high for the default diffusion, so the particle dwells
    /// in each well for tens to hundreds of time units.
    pub fn triple_well() -> Self {
        Self::new(vec![0.0, -0.15, 7.56, 0.15, -9.24, 0.0, 2.8]).unwrap()
    }

    /// `V(x) = x^2 / 2`.
    pub fn harmonic() -> Self {
        Self::new(vec![0.0, 0.0, 0.5]).unwrap()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn grad(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }

    fn curvature(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + (k * (k - 1)) as f64 * c)
    }

    /// Local minima and maxima of `V`, each sorted ascending.
    ///
    /// Roots of `V'` are bracketed on a fine grid inside the Cauchy bound and
    /// refined by bisection; double roots that do not change sign are not
    /// extrema and are skipped.
    pub fn critical_points(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.coefficients.len() - 1;
        let lead = n as f64 * self.coefficients[n];
        let bound = 1.0
            + (1..n)
                .map(|k| (k as f64 * self.coefficients[k]).abs() / lead)
                .fold(0.0, f64::max);
        const CELLS: usize = 200_000;
        let h = 2.0 * bound / CELLS as f64;
        let (mut minima, mut maxima) = (Vec::new(), Vec::new());
        let mut a = -bound;
        let mut ga = self.grad(a);
        for i in 1..=CELLS {
            let b = -bound + i as f64 * h;
            let gb = self.grad(b);
            if ga != 0.0 && gb != 0.0 && (ga < 0.0) != (gb < 0.0) {
                let root = self.bisect(a, b, ga);
                if ga < 0.0 {
                    minima.push(root);
                } else {
                    maxima.push(root);
                }
            } else if ga == 0.0 && i > 1 {
                let c = self.curvature(a);
                if c > 0.0 {
                    minima.push(a);
                } else if c < 0.0 {
                    maxima.push(a);
                }
            }
            a = b;
            ga = gb;
        }
        (minima, maxima)
    }

    fn bisect(&self, mut a: f64, mut b: f64, ga: f64) -> f64 {
        let sa = ga < 0.0;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            let gm = self.grad(m);
            if gm == 0.0 {
                return m;
            }
            if (gm < 0.0) == sa {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// Basin index (0-based from the left) of `x`, split at the local maxima.
    pub fn basin_of(&self, x: f64, maxima: &[f64]) -> usize {
        maxima.partition_point(|&m| m <= x)
    }
}

/// Per stored state, the index of the basin it lies in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellLabels {
    pub labels: Vec<usize>,
    /// Local minima of the potential, left to right.
    pub minima: Vec<f64>,
    /// Local maxima separating consecutive basins.
    pub boundaries: Vec<f64>,
}

impl WellLabels {
    pub fn from_states(potential: &Potential, states: &[f64]) -> Self {
        let (minima, boundaries) = potential.critical_points();
        let labels = states.iter().map(|&x| potential.basin_of(x, &boundaries)).collect();
        Self {
            labels,
            minima,
            boundaries,
        }
    }

    pub fn num_basins(&self) -> usize {
        self.minima.len()
    }

    /// Fraction of stored states in each basin.
    pub fn occupancy(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.num_basins()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        let n = self.labels.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    /// `stored_index,label` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stored_index,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// Hysteresis labelling: a state carries the label of the last minimum it
/// came within `radius` of. States before the first visit take the first
/// visited label. Returns labels and the indices where the label changes.
pub fn core_set_labels(states: &[f64], minima: &[f64], radius: f64) -> (Vec<usize>, Vec<usize>) {
    let core = |x: f64| minima.iter().position(|&m| (x - m).abs() <= radius);
    let first = states.iter().find_map(|&x| core(x)).unwrap_or(0);
    let mut current = first;
    let mut labels = Vec::with_capacity(states.len());
    let mut changes = Vec::new();
    for (t, &x) in states.iter().enumerate() {
        if let Some(c) = core(x) {
            if c != current {
                changes.push(t);
                current = c;
            }
        }
        labels.push(current);
    }
    (labels, changes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub potential: Potential,
    pub diffusion: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub x0: f64,
    pub seed: u64,
    pub store_stride: usize,
}

impl SdeConfig {
    /// Triple well with `D = 0.28125`, `dt = 1e-3`, 2e6 steps stored every
    /// 100 steps, starting in the left well.
    pub fn triple_well_default() -> Self {
        Self {
            potential: Potential::triple_well(),
            diffusion: 0.28125,
            dt: 1e-3,
            n_steps: 2_000_000,
            x0: -1.29,
            seed: 42,
            store_stride: 100,
        }
    }

    /// Ornstein-Uhlenbeck process `dX = -X dt + sqrt(2D) dW`.
    pub fn ornstein_uhlenbeck(diffusion: f64, dt: f64, n_steps: usize, seed: u64) -> Self {
        Self {
            potential: Potential::harmonic(),
            diffusion,
            dt,
            n_steps,
            x0: 0.0,
            seed,
            store_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.diffusion > 0.0 && self.diffusion.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "diffusion must be positive, got {}",
                self.diffusion
            )));
        }
        if self.n_steps == 0 || self.store_stride == 0 || self.store_stride > self.n_steps {
            return Err(Error::InvalidArgument(format!(
                "need 0 < store_stride <= n_steps, got stride {} and {} steps",
                self.store_stride, self.n_steps
            )));
        }
        if !self.x0.is_finite() {
            return Err(Error::InvalidArgument("x0 must be finite".into()));
        }
        Ok(())
    }

    pub fn stored_count(&self) -> usize {
        self.n_steps / self.store_stride
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Scalar states after every `store_stride` steps; `x0` is not stored.
    pub trajectory: SnapshotSet,
    pub labels: WellLabels,
}

/// Euler-Maruyama integration of `dX = -V'(X) dt + sqrt(2D) dW`.
pub fn simulate(cfg: &SdeConfig) -> Result<Simulation> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = (2.0 * cfg.diffusion * cfg.dt).sqrt();
    let mut x = cfg.x0;
    let mut stored = Vec::with_capacity(cfg.stored_count());
    for step in 1..=cfg.n_steps {
        let xi: f64 = StandardNormal.sample(&mut rng);
        x += -cfg.potential.grad(x) * cfg.dt + noise * xi;
        if !(x.abs() <= BLOWUP_LIMIT) {
            return Err(Error::Blowup { step, value: x });
        }
        if step % cfg.store_stride == 0 {
            stored.push(x);
        }
    }
    let labels = WellLabels::from_states(&cfg.potential, &stored);
    let trajectory = SnapshotSet::new(vec![1], stored)?.with_dt(cfg.dt * cfg.store_stride as f64)?;
    Ok(Simulation { trajectory, labels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumConfig {
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
    pub period_frames: usize,
    pub amplitude_px: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default = "default_blob_sigma")]
    pub blob_sigma: f64,
    #[serde(default = "default_blob_peak")]
    pub blob_peak: f64,
}

fn default_blob_sigma() -> f64 {
    3.0
}

fn default_blob_peak() -> f64 {
    200.0
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            n_frames: 240,
            width: 64,
            height: 64,
            period_frames: 24,
            amplitude_px: 20.0,
            noise_sigma: 2.0,
            seed: 7,
            blob_sigma: default_blob_sigma(),
            blob_peak: default_blob_peak(),
        }
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidGeometry(format!(
                "frames must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if self.period_frames < 4 {
            return Err(Error::InvalidGeometry(format!(
                "period must be at least 4 frames, got {}",
                self.period_frames
            )));
        }
        if self.n_frames == 0 {
            return Err(Error::InvalidGeometry("need at least one frame".into()));
        }
        let half = (self.width - 1) as f64 / 2.0;
        if !(self.amplitude_px >= 0.0 && self.amplitude_px <= half) {
            return Err(Error::InvalidGeometry(format!(
                "amplitude must lie in [0, {half}], got {}",
                self.amplitude_px
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidGeometry("noise sigma must be nonnegative".into()));
        }
        if !(self.blob_sigma > 0.0 && self.blob_sigma.is_finite())
            || !(self.blob_peak >= 0.0 && self.blob_peak <= 255.0)
        {
            return Err(Error::InvalidGeometry("blob must have positive width and peak in [0, 255]".into()));
        }
        Ok(())
    }

    /// Horizontal offset of the blob center from the frame middle at frame `t`.
    pub fn displacement(&self, t: usize) -> f64 {
        let phase = (t % self.period_frames) as f64 / self.period_frames as f64;
        self.amplitude_px * (2.0 * PI * phase).sin()
    }

    /// Blob center `(column, row)` at frame `t`.
    pub fn center(&self, t: usize) -> (f64, f64) {
        (
            (self.width - 1) as f64 / 2.0 + self.displacement(t),
            (self.height - 1) as f64 / 2.0,
        )
    }
}

/// Grayscale frames of shape `[height, width]` showing a Gaussian blob that
/// swings horizontally. Noise for frame `t` comes from its own ChaCha stream,
/// so output does not depend on thread scheduling.
pub fn render_pendulum(cfg: &PendulumConfig) -> Result<SnapshotSet> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let mut data = vec![0.0; cfg.n_frames * w * h];
    let inv = 1.0 / (2.0 * cfg.blob_sigma * cfg.blob_sigma);
    data.par_chunks_mut(w * h).enumerate().for_each(|(t, frame)| {
        let (cx, cy) = cfg.center(t);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(t as u64);
        for r in 0..h {
            for c in 0..w {
                let d2 = (c as f64 - cx).powi(2) + (r as f64 - cy).powi(2);
                let mut v = cfg.blob_peak * (-d2 * inv).exp();
                if cfg.noise_sigma > 0.0 {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    v += cfg.noise_sigma * xi;
                }
                frame[r * w + c] = v.clamp(0.0, 255.0);
            }
        }
    });
    SnapshotSet::new(vec![h, w], data)?.with_dt(1.0)
}

/// Intensity-weighted column of a `[height, width]` frame, counting only
/// intensity above the midpoint between the frame median and its maximum.
/// The threshold keeps background noise out of the estimate.
pub fn horizontal_centroid(frame: &[f64], width: usize) -> f64 {
    let mut sorted = frame.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let threshold = 0.5 * (median + sorted[sorted.len() - 1]);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &v) in frame.iter().enumerate() {
        let wgt = (v - threshold).max(0.0);
        num += wgt * (i % width) as f64;
        den += wgt;
    }
    if den > 0.0 {
        num / den
    } else {
        (width - 1) as f64 / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn potential_values() {
        let p = Potential::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(p.eval(2.0), 4.0);
        assert_eq!(p.grad(2.0), 4.0);
        let tw = Potential::triple_well();
        assert_eq!(tw.grad(0.0), -0.15);
        assert_eq!(tw.eval(0.0), 0.0);
        // 2.8 * (1 - 3.3 + 2.7) + 0.15 * 0
        assert!((tw.eval(1.0) - 1.12).abs() < 1e-14);
        // 6 * 2.8 - 4 * 9.24 + 3 * 0.15 + 2 * 7.56 - 0.15
        assert!((tw.grad(1.0) - (-4.74)).abs() < 1e-13);
    }

    #[test]
    fn invalid_potentials() {
        assert!(Potential::new(vec![0.0, 1.0]).is_err());
        assert!(Potential::new(vec![0.0, 0.0, 0.0, 1.0]).is_err());
        assert!(Potential::new(vec![0.0, 0.0, -1.0]).is_err());
        assert!(Potential::new(vec![0.0, f64::NAN, 1.0]).is_err());
        assert_eq!(Potential::new(vec![1.0, 0.0, 2.0, 0.0, 0.0]).unwrap().coefficients().len(), 3);
        assert!(serde_json::from_str::<Potential>("[0, 1]").is_err());
    }

    #[test]
    fn triple_well_structure() {
        let p = Potential::triple_well();
        let (minima, maxima) = p.critical_points();
        assert_eq!(minima.len(), 3);
        assert_eq!(maxima.len(), 2);
        for m in minima.iter().chain(&maxima) {
            assert!(p.grad(*m).abs() < 1e-10);
        }
        assert!((minima[0] + 1.2966).abs() < 1e-3);
        assert!((minima[1] - 0.0099).abs() < 1e-3);
        assert!((minima[2] - 1.2774).abs() < 1e-3);
        assert!((maxima[0] + 0.7325).abs() < 1e-3);
        assert!((maxima[1] - 0.7418).abs() < 1e-3);
        assert!(maxima[0] < minima[1] && minima[1] < maxima[1]);
        let depth: Vec<f64> = minima.iter().map(|&m| p.eval(m)).collect();
        assert!(depth[0] < depth[1] && depth[0] < depth[2]);
        assert_eq!(p.basin_of(-2.0, &maxima), 0);
        assert_eq!(p.basin_of(0.1, &maxima), 1);
        assert_eq!(p.basin_of(3.0, &maxima), 2);
    }

    #[test]
    fn harmonic_has_single_basin() {
        let (minima, maxima) = Potential::harmonic().critical_points();
        assert_eq!(minima.len(), 1);
        assert!(minima[0].abs() < 1e-12);
        assert!(maxima.is_empty());
    }

    #[test]
    fn small_noise_stays_at_minimum() {
        let p = Potential::triple_well();
        let (minima, _) = p.critical_points();
        for &m in &minima {
            let cfg = SdeConfig {
                diffusion: 1e-12,
                n_steps: 50_000,
                x0: m,
                ..SdeConfig::triple_well_default()
            };
            let sim = simulate(&cfg).unwrap();
            assert_eq!(sim.trajectory.count(), 500);
            assert!(sim.trajectory.data().iter().all(|x| (x - m).abs() < 1e-3));
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = SdeConfig {
            n_steps: 20_000,
            ..SdeConfig::triple_well_default()
        };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.trajectory.data(), b.trajectory.data());
        assert_eq!(a.trajectory.dt(), Some(0.1));
        let c = simulate(&SdeConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.trajectory.data(), c.trajectory.data());
    }

    #[test]
    fn blowup_and_validation() {
        let cfg = SdeConfig {
            dt: 1.0,
            x0: 3.0,
            n_steps: 100,
            store_stride: 1,
            ..SdeConfig::triple_well_default()
        };
        assert!(matches!(simulate(&cfg), Err(Error::Blowup { step: 2, .. })));
        let base = SdeConfig::triple_well_default();
        assert!(simulate(&SdeConfig { dt: 0.0, ..base.clone() }).is_err());
        assert!(simulate(&SdeConfig { diffusion: -1.0, ..base.clone() }).is_err());
        assert!(simulate(&SdeConfig { n_steps: 0, ..base.clone() }).is_err());
        assert!(simulate(&SdeConfig { store_stride: 0, ..base }).is_err());
    }

    #[test]
    fn labels_and_core_sets() {
        let p = Potential::triple_well();
        let labels = WellLabels::from_states(&p, &[-1.3, -0.8, 0.0, 0.5, 1.0, 1.3]);
        assert_eq!(labels.labels, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(labels.occupancy(), vec![2.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0]);
        assert!(labels.to_csv().starts_with("stored_index,label\n0,0\n1,0\n2,1\n"));

        let minima = [-1.0, 0.0, 1.0];
        let states = [-0.5, -1.0, -0.6, -0.4, 0.05, 0.6, -0.2, 0.9, 1.0];
        let (l, changes) = core_set_labels(&states, &minima, 0.1);
        assert_eq!(l, vec![0, 0, 0, 0, 1, 1, 1, 2, 2]);
        assert_eq!(changes, vec![4, 7]);
    }

    #[test]
    fn pendulum_geometry_errors() {
        let base = PendulumConfig::default();
        for bad in [
            PendulumConfig { width: 15, ..base.clone() },
            PendulumConfig { height: 8, ..base.clone() },
            PendulumConfig { period_frames: 3, ..base.clone() },
            PendulumConfig { amplitude_px: 40.0, ..base.clone() },
        ] {
            assert!(matches!(render_pendulum(&bad), Err(Error::InvalidGeometry(_))));
        }
    }

    #[test]
    fn pendulum_periodic_without_noise() {
        let cfg = PendulumConfig {
            n_frames: 60,
            noise_sigma: 0.0,
            ..PendulumConfig::default()
        };
        let frames = render_pendulum(&cfg).unwrap();
        assert_eq!(frames.shape(), &[64, 64]);
        for t in 0..36 {
            assert_eq!(frames.snapshot(t), frames.snapshot(t + 24));
        }
        for t in 0..60 {
            let total: f64 = frames.snapshot(t).iter().sum();
            let expected = 2.0 * PI * 9.0 * 200.0;
            assert!((total - expected).abs() < 0.01 * expected, "frame {t}: {total}");
            let cx = horizontal_centroid(frames.snapshot(t), 64);
            assert!((cx - cfg.center(t).0).abs() < 0.05);
        }
    }

    #[test]
    fn pendulum_zero_amplitude_and_seeds() {
        let cfg = PendulumConfig {
            n_frames: 12,
            amplitude_px: 0.0,
            ..PendulumConfig::default()
        };
        let frames = render_pendulum(&cfg).unwrap();
        let first = frames.snapshot(0).to_vec();
        for t in 1..12 {
            let diff: f64 = frames
                .snapshot(t)
                .iter()
                .zip(&first)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / first.len() as f64;
            // Two independent noise draws differ by 2 sigma^2 in mean square.
            assert!(diff.sqrt() < 4.0 * cfg.noise_sigma);
        }
        assert_eq!(render_pendulum(&cfg).unwrap().data(), frames.data());
        let other = render_pendulum(&PendulumConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(other.data(), frames.data());
        assert!(frames.data().iter().all(|v| (0.0..=255.0).contains(v)));
    }

    proptest! {
        #[test]
        fn grad_matches_finite_differences(x in -2.0f64..2.0) {
            let p = Potential::triple_well();
            let h = 1e-5;
            let fd = (p.eval(x + h) - p.eval(x - h)) / (2.0 * h);
            let g = p.grad(x);
            prop_assert!((fd - g).abs() <= 1e-8 * g.abs().max(1.0));
        }

        #[test]
        fn labels_partition(xs in prop::collection::vec(-3.0f64..3.0, 1..50)) {
            let p = Potential::triple_well();
            let labels = WellLabels::from_states(&p, &xs);
            prop_assert!(labels.labels.iter().all(|&l| l < 3));
            let total: f64 = labels.occupancy().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (&x, &l) in xs.iter().zip(&labels.labels) {
                if l > 0 { prop_assert!(x >= labels.boundaries[l - 1]); }
                if l < 2 { prop_assert!(x < labels.boundaries[l]); }
            }
        }
    }
}
