//! Snapshot sequences, lagged pairs, and their on-disk formats.
//!
//! Every snapshot is a real tensor of a fixed shape. Internally a
//! [`SnapshotSet`] stores all snapshots flattened in row-major order, one after
//! the other, so kernel code only ever sees flat `&[f64]` slices.

mod io;

pub use io::{content_hash, from_kto1_bytes, load, save, to_kto1_bytes, Format};

use crate::error::{Error, Result};

/// An ordered collection of equally shaped real tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    shape: Vec<usize>,
    count: usize,
    data: Vec<f64>,
    dt: Option<f64>,
}

/// Optional preprocessing applied before kernel evaluation.
///
/// Raw values are used unless one of these is requested explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preprocess {
    #[default]
    None,
    /// Subtract the mean snapshot.
    Center,
    /// Subtract the mean snapshot and divide by the global standard deviation.
    Standardize,
}

impl SnapshotSet {
    /// Builds a set from a flat row-major buffer. The snapshot count is
    /// inferred from `data.len() / prod(shape)`.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&s| s == 0) {
            return Err(Error::ShapeMismatch(format!(
                "shape must be a nonempty list of positive sizes, got {shape:?}"
            )));
        }
        let dim: usize = shape.iter().product();
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not split into snapshots of shape {shape:?}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            count: data.len() / dim,
            shape,
            data,
            dt: None,
        })
    }

    /// One scalar snapshot per value.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(vec![1], values.to_vec())
    }

    /// One vector snapshot per row. All rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::ShapeMismatch("no rows".into()));
        };
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![dim], data)
    }

    /// Attaches the physical time between consecutive snapshots.
    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        self.dt = Some(dt);
        Ok(self)
    }

    pub(crate) fn set_dt(&mut self, dt: Option<f64>) {
        self.dt = dt;
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Number of entries per snapshot, `prod(shape)`.
    pub fn dim(&self) -> usize {
        self.data.len() / self.count
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    pub fn snapshot(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim())
    }

    /// The snapshots at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= self.count {
                return Err(Error::InvalidArgument(format!(
                    "snapshot index {i} out of range for {} snapshots",
                    self.count
                )));
            }
            data.extend_from_slice(self.snapshot(i));
        }
        let mut out = Self::new(self.shape.clone(), data)?;
        out.dt = None;
        Ok(out)
    }

    /// Every `stride`-th snapshot starting at 0. `dt` is scaled accordingly.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        let indices: Vec<usize> = (0..self.count).step_by(stride).collect();
        let mut out = self.select(&indices)?;
        out.dt = self.dt.map(|dt| dt * stride as f64);
        Ok(out)
    }

    /// Appends the snapshots of `other`, which must have the same shape.
    pub fn concat(&self, other: &SnapshotSet) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut out = Self::new(self.shape.clone(), data)?;
        out.dt = self.dt;
        Ok(out)
    }

    pub fn mean_snapshot(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for snap in self.iter() {
            for (m, v) in mean.iter_mut().zip(snap) {
                *m += v;
            }
        }
        let n = self.count as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    pub fn preprocess(&self, mode: Preprocess) -> Self {
        match mode {
            Preprocess::None => self.clone(),
            Preprocess::Center | Preprocess::Standardize => {
                let mean = self.mean_snapshot();
                let mut data = self.data.clone();
                for snap in data.chunks_exact_mut(self.dim()) {
                    for (v, m) in snap.iter_mut().zip(&mean) {
                        *v -= m;
                    }
                }
                if mode == Preprocess::Standardize {
                    let var = data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
                    if var > 0.0 {
                        let sd = var.sqrt();
                        data.iter_mut().for_each(|v| *v /= sd);
                    }
                }
                Self {
                    shape: self.shape.clone(),
                    count: self.count,
                    data,
                    dt: self.dt,
                }
            }
        }
    }
}

/// Aligned snapshot pairs `(x_i, y_i)` where `y_i` is observed `lag_steps`
/// trajectory steps after `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    x: SnapshotSet,
    y: SnapshotSet,
    lag_steps: usize,
    step_dt: Option<f64>,
}

impl PairedDataset {
    pub fn new(x: SnapshotSet, y: SnapshotSet, lag_steps: usize) -> Result<Self> {
        if lag_steps == 0 {
            return Err(Error::InvalidArgument("lag_steps must be at least 1".into()));
        }
        if x.shape != y.shape || x.count != y.count {
            return Err(Error::ShapeMismatch(format!(
                "X is {} x {:?} but Y is {} x {:?}",
                x.count, x.shape, y.count, y.shape
            )));
        }
        let step_dt = x.dt;
        Ok(Self {
            x,
            y,
            lag_steps,
            step_dt,
        })
    }

    /// Sliding-window pairs `(traj[i], traj[i + lag])` for every `i`.
    pub fn from_trajectory(traj: &SnapshotSet, lag_steps: usize) -> Result<Self> {
        Self::from_trajectory_strided(traj, lag_steps, 1)
    }

    /// Like [`from_trajectory`](Self::from_trajectory) but only pairs starting
    /// at multiples of `stride` are kept.
    pub fn from_trajectory_strided(
        traj: &SnapshotSet,
        lag_steps: usize,
        stride: usize,
    ) -> Result<Self> {
        if lag_steps == 0 {
            return Err(Error::InvalidArgument("lag_steps must be at least 1".into()));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        if lag_steps >= traj.count {
            return Err(Error::LagTooLarge {
                lag: lag_steps,
                count: traj.count,
            });
        }
        let starts: Vec<usize> = (0..traj.count - lag_steps).step_by(stride).collect();
        let ends: Vec<usize> = starts.iter().map(|i| i + lag_steps).collect();
        let mut x = traj.select(&starts)?;
        let mut y = traj.select(&ends)?;
        let spacing = traj.dt.map(|dt| dt * stride as f64);
        x.dt = spacing;
        y.dt = spacing;
        Ok(Self {
            x,
            y,
            lag_steps,
            step_dt: traj.dt,
        })
    }

    pub fn x(&self) -> &SnapshotSet {
        &self.x
    }

    pub fn y(&self) -> &SnapshotSet {
        &self.y
    }

    pub fn lag_steps(&self) -> usize {
        self.lag_steps
    }

    pub fn count(&self) -> usize {
        self.x.count
    }

    /// Time per trajectory step, if known.
    pub fn step_dt(&self) -> Option<f64> {
        self.step_dt
    }

    /// `lag_steps * step_dt`, with a unit step when `dt` is unknown.
    pub fn lag_time(&self) -> f64 {
        self.lag_steps as f64 * self.step_dt.unwrap_or(1.0)
    }
}
