//! Positive-definite kernels on flattened snapshots and Gram-matrix assembly.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensordata::{PairedDataset, SnapshotSet};

/// A kernel on flat snapshot vectors.
///
/// The Gaussian kernel is `exp(-|x - x'|^2 / (2 sigma^2))` with the Frobenius
/// (flattened Euclidean) norm. The polynomial kernel `(<x, x'> + c)^p` has a
/// finite explicit feature map, see [`crate::baselines::PolynomialFeatures`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    Gaussian { sigma: f64 },
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let k = KernelSpec::Polynomial { degree, offset };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } if !(sigma.is_finite() && sigma > 0.0) => Err(
                Error::InvalidArgument(format!("Gaussian bandwidth must be positive, got {sigma}")),
            ),
            KernelSpec::Polynomial { degree: 0, .. } => Err(Error::InvalidArgument(
                "polynomial degree must be at least 1".into(),
            )),
            KernelSpec::Polynomial { offset, .. } if !(offset.is_finite() && offset >= 0.0) => {
                Err(Error::InvalidArgument(format!(
                    "polynomial offset must be nonnegative, got {offset}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        check_len(x.len(), x2.len())?;
        Ok(self.eval_unchecked(x, x2))
    }

    /// Gradient of `k(x, xi)` with respect to `x`.
    pub fn grad_x(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        check_len(x.len(), xi.len())?;
        let mut out = vec![0.0; x.len()];
        self.accumulate_grad(x, xi, 1.0, &mut out);
        Ok(out)
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => {
                (-sq_dist(x, x2) / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Polynomial { degree, offset } => {
                (dot(x, x2) + offset).powi(degree as i32)
            }
        }
    }

    /// Adds `weight * grad_x k(x, xi)` to `out` and returns `k(x, xi)`.
    pub(crate) fn accumulate_grad(&self, x: &[f64], xi: &[f64], weight: f64, out: &mut [f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                let k = (-sq_dist(x, xi) / (2.0 * s2)).exp();
                let scale = -weight * k / s2;
                for ((o, a), b) in out.iter_mut().zip(x).zip(xi) {
                    *o += scale * (a - b);
                }
                k
            }
            KernelSpec::Polynomial { degree, offset } => {
                let base = dot(x, xi) + offset;
                let scale = weight * degree as f64 * base.powi(degree as i32 - 1);
                for (o, b) in out.iter_mut().zip(xi) {
                    *o += scale * b;
                }
                base.powi(degree as i32)
            }
        }
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Matrix of kernel values `k(a_i, b_j)`, of size `a.count() x b.count()`.
///
/// Gaussian entries use `|a|^2 + |b|^2 - 2<a, b>` with precomputed norms and
/// clamp negative round-off to zero. Rows are computed in parallel; every
/// entry is a fixed-order sequential sum, so results do not depend on the
/// thread count.
pub fn gram(k: &KernelSpec, a: &SnapshotSet, b: &SnapshotSet) -> Result<Mat<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "Gram matrix between shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    k.validate()?;
    let (n, m) = (a.count(), b.count());
    let mut buf = vec![0.0; n * m];
    match *k {
        KernelSpec::Gaussian { sigma } => {
            let na: Vec<f64> = a.iter().map(|s| dot(s, s)).collect();
            let nb: Vec<f64> = b.iter().map(|s| dot(s, s)).collect();
            let inv = 1.0 / (2.0 * sigma * sigma);
            buf.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
                let ai = a.snapshot(i);
                for (j, out) in row.iter_mut().enumerate() {
                    let d2 = (na[i] + nb[j] - 2.0 * dot(ai, b.snapshot(j))).max(0.0);
                    *out = (-d2 * inv).exp();
                }
            });
        }
        KernelSpec::Polynomial { degree, offset } => {
            buf.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
                let ai = a.snapshot(i);
                for (j, out) in row.iter_mut().enumerate() {
                    *out = (dot(ai, b.snapshot(j)) + offset).powi(degree as i32);
                }
            });
        }
    }
    Ok(Mat::from_fn(n, m, |i, j| buf[i * m + j]))
}

/// The Gram matrix and the two time-lagged Gram matrices of a dataset.
#[derive(Debug, Clone)]
pub struct GramPack {
    pub g_xx: Mat<f64>,
    pub g_xy: Mat<f64>,
    pub g_yx: Mat<f64>,
}

impl GramPack {
    /// `g_yx` is the exact transpose of `g_xy`.
    pub fn new(k: &KernelSpec, data: &PairedDataset) -> Result<Self> {
        let g_xx = gram(k, data.x(), data.x())?;
        let g_xy = gram(k, data.x(), data.y())?;
        let g_yx = g_xy.transpose().to_owned();
        Ok(Self { g_xx, g_xy, g_yx })
    }
}

/// Median pairwise Euclidean distance between snapshots, a common starting
/// point for the Gaussian bandwidth. At most `max_points` evenly strided
/// snapshots are used.
pub fn median_pairwise_distance(set: &SnapshotSet, max_points: usize) -> f64 {
    let stride = set.count().div_ceil(max_points.max(2));
    let idx: Vec<usize> = (0..set.count()).step_by(stride.max(1)).collect();
    let mut d: Vec<f64> = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (p, &i) in idx.iter().enumerate() {
        for &j in &idx[p + 1..] {
            d.push(sq_dist(set.snapshot(i), set.snapshot(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    }
}
