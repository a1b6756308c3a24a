//! Exact DMD and an explicit-feature covariance operator.
//!
//! The covariance route works in the feature space of the polynomial kernel
//! and is independent of the Gram-matrix code in [`crate::operators`], which
//! makes it a useful cross-check.

use std::fs;
use std::path::Path;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::codec::{pairs, unpairs, EncodedMatrix};
use crate::error::{Error, Result};
use crate::kernels::{dot, KernelSpec};
use crate::linalg::{sorted_eigen, spectral_order, RegularizedSystem};
use crate::operators::OperatorKind;
use crate::tensordata::{PairedDataset, SnapshotSet};

/// Relative singular value cutoff used when no rank is requested.
pub const DEFAULT_SVD_TOL: f64 = 1e-10;

/// Largest explicit feature dimension accepted by [`covariance_oracle`].
pub const MAX_FEATURE_DIM: usize = 5000;

const DMD_FORMAT: &str = "kto-dmd/1";

#[derive(Debug, Clone)]
pub struct DmdResult {
    pub eigenvalues: Vec<c64>,
    /// `d x r`, one mode per column.
    pub modes: Mat<c64>,
    pub rank_used: usize,
}

#[derive(Serialize, Deserialize)]
struct DmdFile {
    format: String,
    rank_used: usize,
    eigenvalues: Vec<[f64; 2]>,
    modes: EncodedMatrix,
}

impl DmdResult {
    pub fn to_json(&self) -> Result<String> {
        let file = DmdFile {
            format: DMD_FORMAT.to_owned(),
            rank_used: self.rank_used,
            eigenvalues: pairs(&self.eigenvalues),
            modes: EncodedMatrix::encode(&self.modes),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DmdFile =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if file.format != DMD_FORMAT {
            return Err(Error::Serialization(format!("unexpected format {:?}", file.format)));
        }
        let modes = file.modes.decode()?;
        if file.eigenvalues.len() != file.rank_used || modes.ncols() != file.rank_used {
            return Err(Error::Serialization("rank does not match stored arrays".into()));
        }
        Ok(Self {
            eigenvalues: unpairs(&file.eigenvalues),
            modes,
            rank_used: file.rank_used,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn snapshot_matrix(set: &SnapshotSet) -> Mat<f64> {
    let d = set.dim();
    Mat::from_fn(d, set.count(), |i, j| set.data()[j * d + i])
}

/// Exact DMD of the pairs `(x_i, y_i)`.
///
/// With `X = U S V^T` truncated to rank `r`, the reduced operator is
/// `U_r^T Y V_r S_r^{-1}` and the modes are `Y V_r S_r^{-1} W`. Without an
/// explicit rank, singular values below `svd_tol * s_max` are dropped.
pub fn exact_dmd(data: &PairedDataset, rank: Option<usize>, svd_tol: f64) -> Result<DmdResult> {
    if !(svd_tol >= 0.0 && svd_tol.is_finite()) {
        return Err(Error::InvalidArgument(format!("svd_tol must be finite and nonnegative, got {svd_tol}")));
    }
    let (d, n) = (data.x().dim(), data.count());
    let max_rank = d.min(n);
    if let Some(r) = rank {
        if r == 0 || r > max_rank {
            return Err(Error::InvalidArgument(format!(
                "rank must lie in 1..={max_rank}, got {r}"
            )));
        }
    }
    let x = snapshot_matrix(data.x());
    let y = snapshot_matrix(data.y());
    let svd = x
        .thin_svd()
        .map_err(|e| Error::ConvergenceFailure(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let s_max = (0..max_rank).map(|i| s[i]).fold(0.0f64, f64::max);
    if !(s_max > 0.0) {
        return Err(Error::RankDeficient);
    }
    let r = match rank {
        Some(r) => {
            if !(s[r - 1] > 0.0) {
                return Err(Error::RankDeficient);
            }
            r
        }
        None => (0..max_rank).take_while(|&i| s[i] >= svd_tol * s_max).count(),
    };
    let u = svd.U();
    let v = svd.V();
    let v_scaled = Mat::from_fn(n, r, |i, j| v[(i, j)] / s[j]);
    let b = &y * &v_scaled;
    let a_tilde = u.subcols(0, r).transpose() * &b;
    let (eigenvalues, w) = sorted_eigen(a_tilde.as_ref())?;
    let b_c = Mat::from_fn(d, r, |i, j| c64::new(b[(i, j)], 0.0));
    let modes = &b_c * &w;
    Ok(DmdResult {
        eigenvalues,
        modes,
        rank_used: r,
    })
}

/// Explicit feature map of the polynomial kernel `(<x, x'> + c)^p`.
///
/// Each feature is `w_a x^a` for a multi-index `|a| <= p`, with
/// `w_a^2 = C(p, |a|) c^(p-|a|) |a|! / prod(a_i!)`, so that
/// `<phi(x), phi(x')>` equals the kernel exactly. Zero-weight features are
/// omitted.
#[derive(Debug, Clone)]
pub struct PolynomialFeatures {
    dim: usize,
    degree: u32,
    offset: f64,
    exponents: Vec<Vec<u32>>,
    weights: Vec<f64>,
}

impl PolynomialFeatures {
    pub fn new(dim: usize, degree: u32, offset: f64) -> Result<Self> {
        KernelSpec::polynomial(degree, offset)?;
        if dim == 0 {
            return Err(Error::InvalidArgument("feature map needs dim >= 1".into()));
        }
        let full = binomial((dim + degree as usize) as u128, degree as u128);
        if full > MAX_FEATURE_DIM as u128 {
            return Err(Error::FeatureDimensionTooLarge {
                dim: usize::try_from(full).unwrap_or(usize::MAX),
                limit: MAX_FEATURE_DIM,
            });
        }
        let mut exponents = Vec::new();
        let mut weights = Vec::new();
        let mut current = vec![0u32; dim];
        enumerate(&mut current, 0, degree, &mut |alpha| {
            let total: u32 = alpha.iter().sum();
            let multinomial = factorial(total) / alpha.iter().map(|&a| factorial(a)).product::<f64>();
            let w2 = binomial(degree as u128, total as u128) as f64
                * offset.powi((degree - total) as i32)
                * multinomial;
            if w2 > 0.0 {
                exponents.push(alpha.to_vec());
                weights.push(w2.sqrt());
            }
        });
        Ok(Self {
            dim,
            degree,
            offset,
            exponents,
            weights,
        })
    }

    pub fn from_kernel(kernel: &KernelSpec, dim: usize) -> Result<Self> {
        match *kernel {
            KernelSpec::Polynomial { degree, offset } => Self::new(dim, degree, offset),
            KernelSpec::Gaussian { .. } => Err(Error::InvalidArgument(
                "the Gaussian kernel has no finite feature map".into(),
            )),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::Polynomial {
            degree: self.degree,
            offset: self.offset,
        }
    }

    pub fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(self
            .exponents
            .iter()
            .zip(&self.weights)
            .map(|(alpha, w)| {
                w * alpha
                    .iter()
                    .zip(x)
                    .map(|(&a, &xi)| xi.powi(a as i32))
                    .product::<f64>()
            })
            .collect())
    }

    /// `D_f x n` matrix whose columns are the mapped snapshots.
    fn feature_matrix(&self, set: &SnapshotSet) -> Result<Mat<f64>> {
        let cols: Vec<Vec<f64>> = set.iter().map(|s| self.map(s)).collect::<Result<_>>()?;
        Ok(Mat::from_fn(self.len(), set.count(), |i, j| cols[j][i]))
    }
}

fn enumerate(current: &mut [u32], pos: usize, budget: u32, f: &mut impl FnMut(&[u32])) {
    if pos == current.len() {
        f(current);
        return;
    }
    for a in 0..=budget {
        current[pos] = a;
        enumerate(current, pos + 1, budget - a, f);
    }
    current[pos] = 0;
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Eigenvalues of `(C_XX + eps_tilde I)^{-1} C_XY` (Koopman) or
/// `(C_XX + eps_tilde I)^{-1} C_YX` (Perron-Frobenius), with the empirical
/// covariances `C_XY = Phi Psi^T / n` built from explicit features.
pub fn covariance_oracle(
    data: &PairedDataset,
    features: &PolynomialFeatures,
    eps_tilde: f64,
    kind: OperatorKind,
) -> Result<Vec<c64>> {
    if !(eps_tilde >= 0.0 && eps_tilde.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps_tilde must be finite and nonnegative, got {eps_tilde}"
        )));
    }
    let phi = features.feature_matrix(data.x())?;
    let psi = features.feature_matrix(data.y())?;
    let inv_n = 1.0 / data.count() as f64;
    let c_xx = (&phi * phi.transpose()) * faer::Scale(inv_n);
    let c_lag = match kind {
        OperatorKind::Koopman => (&phi * psi.transpose()) * faer::Scale(inv_n),
        OperatorKind::PerronFrobenius => (&psi * phi.transpose()) * faer::Scale(inv_n),
    };
    let system = RegularizedSystem::new(c_xx.as_ref(), eps_tilde)?;
    let m = system.solve(c_lag.as_ref());
    let mut values = m
        .eigenvalues()
        .map_err(|e| Error::ConvergenceFailure(format!("{e:?}")))?;
    values.sort_by(spectral_order);
    Ok(values)
}

/// Inner product of explicit features, which should equal the kernel.
pub fn feature_kernel(features: &PolynomialFeatures, x: &[f64], x2: &[f64]) -> Result<f64> {
    Ok(dot(&features.map(x)?, &features.map(x2)?))
}
