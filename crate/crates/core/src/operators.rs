//! Kernel Koopman and kernel Perron-Frobenius eigendecompositions.
//!
//! Both operators are estimated from the Gram matrix `G_XX` and a time-lagged
//! Gram matrix. For eigenvalue `lambda` the coefficient vector `alpha` defines
//! the eigenfunction `phi(x) = sum_i alpha_i k(x, x_i)` over the training
//! snapshots `x_i`:
//!
//! | operator           | eigenproblem                             | `alpha`                  |
//! |--------------------|------------------------------------------|--------------------------|
//! | Koopman            | `(G_XX + eps I)^-1 G_YX v = lambda v`    | `v`                      |
//! | Perron-Frobenius   | `(G_XX + eps I)^-1 G_XY v = lambda v`    | `(G_XX + eps I)^-1 v`    |
//!
//! Eigenvalues are returned in decreasing order of real part (ties by
//! decreasing imaginary part). Each eigenfunction is scaled so that its
//! largest modulus over the training snapshots is 1, attained at a real
//! positive value.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use faer::{c64, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{pairs, unpairs, EncodedMatrix};
use crate::error::{Error, Result};
use crate::kernels::{GramPack, KernelSpec};
use crate::linalg::{eigen_residual, frobenius, sorted_eigen, RegularizedSystem};
use crate::tensordata::{self, content_hash, PairedDataset, SnapshotSet};

/// Which transfer operator to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Koopman,
    PerronFrobenius,
}

/// Number of eigenpairs returned when none is requested.
pub const DEFAULT_NUM_EIGS: usize = 10;

/// Largest accepted eigen-residual, relative to `max(1, |M|_F)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    operator_kind: OperatorKind,
    eigenvalues: Vec<c64>,
    coefficients: Mat<c64>,
    residuals: Vec<f64>,
    epsilon: f64,
    kernel: KernelSpec,
    training_x: Arc<SnapshotSet>,
    lag_steps: usize,
    dt: Option<f64>,
}

/// One eigenfunction `phi(x) = sum_i alpha_i k(x, x_i)`.
#[derive(Debug, Clone)]
pub struct Eigenfunction {
    alpha: Vec<c64>,
    kernel: KernelSpec,
    training_x: Arc<SnapshotSet>,
    eigenvalue: c64,
}

/// Estimates the leading `num_eigs` eigenpairs (default
/// `min(10, n)`) of the chosen kernel transfer operator.
pub fn fit(
    data: &PairedDataset,
    kernel: KernelSpec,
    epsilon: f64,
    kind: OperatorKind,
    num_eigs: Option<usize>,
) -> Result<EigenDecomposition> {
    kernel.validate()?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let n = data.count();
    let m = num_eigs.unwrap_or(DEFAULT_NUM_EIGS.min(n));
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "requested {m} eigenpairs from {n} snapshot pairs"
        )));
    }

    let grams = GramPack::new(&kernel, data)?;
    let system = RegularizedSystem::new(grams.g_xx.as_ref(), epsilon)?;
    let lagged = match kind {
        OperatorKind::Koopman => &grams.g_yx,
        OperatorKind::PerronFrobenius => &grams.g_xy,
    };
    let op = system.solve(lagged.as_ref());
    let (values, vectors) = sorted_eigen(op.as_ref())?;

    let bound = RESIDUAL_TOLERANCE * frobenius(op.as_ref()).max(1.0);
    let mut residuals = Vec::with_capacity(m);
    for j in 0..m {
        let v: Vec<c64> = (0..n).map(|i| vectors[(i, j)]).collect();
        let r = eigen_residual(op.as_ref(), values[j], &v);
        if !(r <= bound) {
            return Err(Error::ConvergenceFailure(format!(
                "eigenpair {} has residual {r:e} above {bound:e}",
                j + 1
            )));
        }
        residuals.push(r);
    }

    let leading = Mat::from_fn(n, m, |i, j| vectors[(i, j)]);
    let mut coefficients = match kind {
        OperatorKind::Koopman => leading,
        OperatorKind::PerronFrobenius => system.solve_complex(leading.as_ref()),
    };
    normalize_columns(&grams.g_xx, &mut coefficients);

    Ok(EigenDecomposition {
        operator_kind: kind,
        eigenvalues: values[..m].to_vec(),
        coefficients,
        residuals,
        epsilon,
        kernel,
        training_x: Arc::new(data.x().clone()),
        lag_steps: data.lag_steps(),
        dt: data.step_dt(),
    })
}

/// Divides each column by the training value of largest modulus, so that
/// value becomes exactly `1 + 0i`.
fn normalize_columns(g_xx: &Mat<f64>, coeffs: &mut Mat<c64>) {
    let n = g_xx.nrows();
    for j in 0..coeffs.ncols() {
        let mut best = c64::new(0.0, 0.0);
        for i in 0..n {
            let mut phi = c64::new(0.0, 0.0);
            for l in 0..n {
                phi += coeffs[(l, j)] * g_xx[(i, l)];
            }
            if phi.norm() > best.norm() {
                best = phi;
            }
        }
        if best.norm() > 0.0 {
            let inv = best.inv();
            for i in 0..n {
                coeffs[(i, j)] *= inv;
            }
        }
    }
}

impl EigenDecomposition {
    pub fn operator_kind(&self) -> OperatorKind {
        self.operator_kind
    }

    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    /// `n x m` matrix whose column `j` holds `alpha` of eigenfunction `j + 1`.
    pub fn coefficients(&self) -> &Mat<c64> {
        &self.coefficients
    }

    /// `|M v - lambda v| / |v|` for each returned pair.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn training_x(&self) -> &SnapshotSet {
        &self.training_x
    }

    pub fn lag_steps(&self) -> usize {
        self.lag_steps
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    /// Physical lag time, `lag_steps * dt` (unit step when `dt` is unknown).
    pub fn lag_time(&self) -> f64 {
        self.lag_steps as f64 * self.dt.unwrap_or(1.0)
    }

    pub fn num_eigs(&self) -> usize {
        self.eigenvalues.len()
    }

    fn check_index(&self, index: usize) -> Result<usize> {
        if index == 0 || index > self.num_eigs() {
            return Err(Error::InvalidIndex {
                index,
                available: self.num_eigs(),
            });
        }
        Ok(index - 1)
    }

    /// Eigenfunction `index`, counted from 1 for the leading pair.
    pub fn eigenfunction(&self, index: usize) -> Result<Eigenfunction> {
        let j = self.check_index(index)?;
        Ok(Eigenfunction {
            alpha: (0..self.coefficients.nrows())
                .map(|i| self.coefficients[(i, j)])
                .collect(),
            kernel: self.kernel,
            training_x: Arc::clone(&self.training_x),
            eigenvalue: self.eigenvalues[j],
        })
    }

    /// Values of several eigenfunctions along `traj`; one vector per index.
    pub fn series(&self, traj: &SnapshotSet, indices: &[usize]) -> Result<Vec<Vec<c64>>> {
        if traj.shape() != self.training_x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "trajectory shape {:?} differs from training shape {:?}",
                traj.shape(),
                self.training_x.shape()
            )));
        }
        let cols = indices
            .iter()
            .map(|&i| self.check_index(i))
            .collect::<Result<Vec<_>>>()?;
        let n = self.training_x.count();
        let rows: Vec<Vec<c64>> = (0..traj.count())
            .into_par_iter()
            .map(|t| {
                let x = traj.snapshot(t);
                let kv: Vec<f64> = self
                    .training_x
                    .iter()
                    .map(|xi| self.kernel.eval_unchecked(x, xi))
                    .collect();
                cols.iter()
                    .map(|&j| {
                        let mut acc = c64::new(0.0, 0.0);
                        for (i, k) in kv.iter().enumerate().take(n) {
                            acc += self.coefficients[(i, j)] * *k;
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok((0..cols.len())
            .map(|c| rows.iter().map(|r| r[c]).collect())
            .collect())
    }

    /// Writes the decomposition and, next to it, its training snapshots.
    ///
    /// The training set is stored as KTO1 at `training_path`; the JSON records
    /// that path relative to the JSON file when possible, plus the SHA-256 of
    /// the canonical KTO1 encoding.
    pub fn save_json(&self, json_path: &Path, training_path: &Path) -> Result<()> {
        tensordata::save(&self.training_x, training_path, tensordata::Format::Kto1)?;
        let reference = json_path
            .parent()
            .and_then(|dir| training_path.strip_prefix(dir).ok())
            .unwrap_or(training_path);
        let text = self.to_json(&reference.to_string_lossy())?;
        fs::write(json_path, text).map_err(|e| Error::io(json_path, e))
    }

    pub fn to_json(&self, training_reference: &str) -> Result<String> {
        let file = DecompositionFile {
            format: DECOMPOSITION_FORMAT.to_owned(),
            operator_kind: self.operator_kind,
            kernel: self.kernel,
            epsilon: self.epsilon,
            lag_steps: self.lag_steps,
            dt: self.dt,
            eigenvalues: pairs(&self.eigenvalues),
            residuals: self.residuals.clone(),
            coefficients: EncodedMatrix::encode(&self.coefficients),
            training: TrainingRef {
                path: training_reference.to_owned(),
                sha256: content_hash(&self.training_x),
                shape: self.training_x.shape().to_vec(),
                count: self.training_x.count(),
            },
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Reads a decomposition written by [`save_json`](Self::save_json),
    /// verifying the training content hash.
    pub fn load_json(json_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        let file: DecompositionFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(json_path, e.to_string()))?;
        if file.format != DECOMPOSITION_FORMAT {
            return Err(Error::parse(json_path, format!("unknown format {:?}", file.format)));
        }
        let mut training_path = PathBuf::from(&file.training.path);
        if training_path.is_relative() {
            if let Some(dir) = json_path.parent() {
                training_path = dir.join(training_path);
            }
        }
        let mut training =
            tensordata::load(&training_path, tensordata::Format::Kto1)?;
        let found = content_hash(&training);
        if found != file.training.sha256 {
            return Err(Error::HashMismatch {
                path: training_path,
                expected: file.training.sha256,
                found,
            });
        }
        training.set_dt(file.dt);
        Self::from_parts(file, training)
    }

    fn from_parts(file: DecompositionFile, training: SnapshotSet) -> Result<Self> {
        file.kernel.validate()?;
        let coefficients = file.coefficients.decode()?;
        let eigenvalues = unpairs(&file.eigenvalues);
        if coefficients.nrows() != training.count() || coefficients.ncols() != eigenvalues.len() {
            return Err(Error::Serialization(format!(
                "coefficients are {} x {}, expected {} x {}",
                coefficients.nrows(),
                coefficients.ncols(),
                training.count(),
                eigenvalues.len()
            )));
        }
        Ok(Self {
            operator_kind: file.operator_kind,
            eigenvalues,
            coefficients,
            residuals: file.residuals,
            epsilon: file.epsilon,
            kernel: file.kernel,
            training_x: Arc::new(training),
            lag_steps: file.lag_steps,
            dt: file.dt,
        })
    }
}

const DECOMPOSITION_FORMAT: &str = "kto-eigendecomposition/1";

#[derive(Serialize, Deserialize)]
struct DecompositionFile {
    format: String,
    operator_kind: OperatorKind,
    kernel: KernelSpec,
    epsilon: f64,
    lag_steps: usize,
    dt: Option<f64>,
    eigenvalues: Vec<[f64; 2]>,
    residuals: Vec<f64>,
    coefficients: EncodedMatrix,
    training: TrainingRef,
}

#[derive(Serialize, Deserialize)]
struct TrainingRef {
    path: String,
    sha256: String,
    shape: Vec<usize>,
    count: usize,
}

impl Eigenfunction {
    pub fn new(
        alpha: Vec<c64>,
        kernel: KernelSpec,
        training_x: Arc<SnapshotSet>,
        eigenvalue: c64,
    ) -> Result<Self> {
        kernel.validate()?;
        if alpha.len() != training_x.count() {
            return Err(Error::DimensionMismatch {
                expected: training_x.count(),
                actual: alpha.len(),
            });
        }
        Ok(Self {
            alpha,
            kernel,
            training_x,
            eigenvalue,
        })
    }

    pub fn alpha(&self) -> &[c64] {
        &self.alpha
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn training_x(&self) -> &SnapshotSet {
        &self.training_x
    }

    pub fn eigenvalue(&self) -> c64 {
        self.eigenvalue
    }

    /// Length of the flat snapshot vectors this function accepts.
    pub fn dim(&self) -> usize {
        self.training_x.dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<c64> {
        self.check_dim(x)?;
        Ok(self
            .alpha
            .iter()
            .zip(self.training_x.iter())
            .fold(c64::new(0.0, 0.0), |acc, (a, xi)| {
                acc + *a * self.kernel.eval_unchecked(x, xi)
            }))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<c64>> {
        self.check_dim(x)?;
        let d = x.len();
        let mut re = vec![0.0; d];
        let mut im = vec![0.0; d];
        for (a, xi) in self.alpha.iter().zip(self.training_x.iter()) {
            self.kernel.accumulate_grad(x, xi, a.re, &mut re);
            if a.im != 0.0 {
                self.kernel.accumulate_grad(x, xi, a.im, &mut im);
            }
        }
        Ok(re.into_iter().zip(im).map(|(r, i)| c64::new(r, i)).collect())
    }

    /// `phi(x)` together with the gradient of its real part, written to
    /// `grad` (overwritten).
    pub(crate) fn value_and_real_grad(&self, x: &[f64], grad: &mut [f64]) -> c64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = c64::new(0.0, 0.0);
        for (a, xi) in self.alpha.iter().zip(self.training_x.iter()) {
            let k = self.kernel.accumulate_grad(x, xi, a.re, grad);
            value += *a * k;
        }
        value
    }
}

/// `phi(x)` for one eigenfunction.
pub fn eval_eigenfunction(ef: &Eigenfunction, x: &[f64]) -> Result<c64> {
    ef.eval(x)
}

/// Gradient of `phi` with respect to `x`, componentwise complex.
pub fn grad_eigenfunction(ef: &Eigenfunction, x: &[f64]) -> Result<Vec<c64>> {
    ef.grad(x)
}

/// `phi_index(traj_t)` for every snapshot of `traj` (index counted from 1).
pub fn eigenfunction_series(
    decomp: &EigenDecomposition,
    traj: &SnapshotSet,
    index: usize,
) -> Result<Vec<c64>> {
    Ok(decomp.series(traj, &[index])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::gram;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_traj(seed: u64, n: usize, d: usize) -> SnapshotSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; d];
        let mut data = Vec::new();
        for _ in 0..n {
            for v in x.iter_mut() {
                *v = 0.8 * *v + rng.random_range(-1.0..1.0);
            }
            data.extend_from_slice(&x);
        }
        SnapshotSet::new(vec![d], data).unwrap()
    }

    #[test]
    fn single_pair_problem() {
        let x = SnapshotSet::from_scalars(&[0.3]).unwrap();
        let y = SnapshotSet::from_scalars(&[1.1]).unwrap();
        let data = PairedDataset::new(x, y, 1).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let dec = fit(&data, k, 0.0, OperatorKind::Koopman, None).unwrap();
        assert_eq!(dec.num_eigs(), 1);
        let expected = k.eval(&[1.1], &[0.3]).unwrap();
        assert!((dec.eigenvalues()[0].re - expected).abs() < 1e-14);
        assert_eq!(dec.eigenvalues()[0].im, 0.0);
    }

    #[test]
    fn identity_dynamics_has_unit_spectrum() {
        let x = SnapshotSet::from_scalars(&[0.0, 3.0, 6.0, 9.0, 12.0]).unwrap();
        let data = PairedDataset::new(x.clone(), x, 1).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        for kind in [OperatorKind::Koopman, OperatorKind::PerronFrobenius] {
            let dec = fit(&data, k, 0.0, kind, Some(5)).unwrap();
            for l in dec.eigenvalues() {
                assert!((l - c64::new(1.0, 0.0)).norm() < 1e-8, "{l}");
            }
        }
    }

    #[test]
    fn argument_errors() {
        let traj = random_traj(1, 10, 2);
        let data = PairedDataset::from_trajectory(&traj, 1).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(fit(&data, k, -1.0, OperatorKind::Koopman, None).is_err());
        assert!(fit(&data, k, 0.1, OperatorKind::Koopman, Some(0)).is_err());
        assert!(fit(&data, k, 0.1, OperatorKind::Koopman, Some(10)).is_err());
        let dup = SnapshotSet::from_scalars(&[1.0, 1.0]).unwrap();
        let data = PairedDataset::new(dup.clone(), dup, 1).unwrap();
        assert!(matches!(
            fit(&data, k, 0.0, OperatorKind::Koopman, None),
            Err(Error::SingularProblem { .. })
        ));
    }

    #[test]
    fn decomposition_invariants() {
        let traj = random_traj(5, 60, 2);
        let data = PairedDataset::from_trajectory(&traj, 1).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        for kind in [OperatorKind::Koopman, OperatorKind::PerronFrobenius] {
            let dec = fit(&data, k, 0.05, kind, Some(12)).unwrap();
            let ev = dec.eigenvalues();
            for w in ev.windows(2) {
                assert!(crate::linalg::spectral_order(&w[0], &w[1]).is_le());
            }
            for l in ev.iter().filter(|l| l.im.abs() > 1e-10) {
                assert!(ev.iter().any(|o| (o - l.conj()).norm() < 1e-10));
            }
            assert!(dec.residuals().iter().all(|&r| r <= 1e-6));
            let series = dec.series(&traj, &[1, 2, 3]).unwrap();
            assert_eq!(series[0].len(), traj.count());
            let train = dec.series(dec.training_x(), &[1, 2, 3]).unwrap();
            for s in &train {
                let max = s.iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!((max - 1.0).abs() < 1e-10);
                let top = s.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
                assert!(top.im.abs() < 1e-10 && top.re > 0.0);
            }
        }
    }

    #[test]
    fn training_series_equals_gram_times_alpha() {
        let traj = random_traj(9, 40, 3);
        let data = PairedDataset::from_trajectory(&traj, 2).unwrap();
        let k = KernelSpec::gaussian(1.5).unwrap();
        let dec = fit(&data, k, 0.1, OperatorKind::Koopman, Some(4)).unwrap();
        let g = gram(&k, data.x(), data.x()).unwrap();
        for idx in 1..=4 {
            let s = eigenfunction_series(&dec, data.x(), idx).unwrap();
            for (i, si) in s.iter().enumerate() {
                let mut direct = c64::new(0.0, 0.0);
                for l in 0..data.count() {
                    direct += dec.coefficients()[(l, idx - 1)] * g[(i, l)];
                }
                assert!((si - direct).norm() < 1e-10);
            }
        }
        assert!(matches!(
            dec.series(&traj, &[5]),
            Err(Error::InvalidIndex { index: 5, .. })
        ));
        assert!(dec.eigenfunction(0).is_err());
        let other = SnapshotSet::from_scalars(&[1.0]).unwrap();
        assert!(matches!(dec.series(&other, &[1]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn constant_trajectory_gives_constant_series() {
        let traj = random_traj(2, 30, 1);
        let data = PairedDataset::from_trajectory(&traj, 1).unwrap();
        let dec = fit(&data, KernelSpec::gaussian(1.0).unwrap(), 0.1, OperatorKind::Koopman, Some(3)).unwrap();
        let flat = SnapshotSet::from_scalars(&[0.4; 7]).unwrap();
        let s = eigenfunction_series(&dec, &flat, 2).unwrap();
        assert!(s.iter().all(|z| *z == s[0]));
    }

    #[test]
    fn eigenfunction_evaluation() {
        let train = Arc::new(SnapshotSet::from_rows(&[vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap());
        let k = KernelSpec::gaussian(1.0).unwrap();
        let e1 = vec![c64::new(1.0, 0.0), c64::new(0.0, 0.0)];
        let ef = Eigenfunction::new(e1, k, Arc::clone(&train), c64::new(1.0, 0.0)).unwrap();
        assert_eq!(eval_eigenfunction(&ef, &[0.0, 1.0]).unwrap(), c64::new(1.0, 0.0));
        let zero = Eigenfunction::new(vec![c64::new(0.0, 0.0); 2], k, Arc::clone(&train), c64::new(0.0, 0.0)).unwrap();
        assert_eq!(eval_eigenfunction(&zero, &[5.0, 5.0]).unwrap(), c64::new(0.0, 0.0));
        assert!(grad_eigenfunction(&zero, &[5.0, 5.0]).unwrap().iter().all(|g| g.norm() == 0.0));
        assert!(matches!(
            eval_eigenfunction(&ef, &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
        assert!(Eigenfunction::new(vec![], k, train, c64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn single_term_gradient() {
        let train = Arc::new(SnapshotSet::from_scalars(&[0.0]).unwrap());
        let ef = Eigenfunction::new(
            vec![c64::new(1.0, 0.0)],
            KernelSpec::gaussian(1.0).unwrap(),
            train,
            c64::new(1.0, 0.0),
        )
        .unwrap();
        let g = grad_eigenfunction(&ef, &[1.0]).unwrap();
        assert!((g[0].re + (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(g[0].im, 0.0);
    }

    #[test]
    fn random_eigenfunction_matches_summation_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let train = Arc::new(random_traj(4, 10, 3));
        let alpha: Vec<c64> = (0..10)
            .map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let k = KernelSpec::gaussian(0.9).unwrap();
        let ef = Eigenfunction::new(alpha.clone(), k, Arc::clone(&train), c64::new(0.5, 0.0)).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut direct = c64::new(0.0, 0.0);
        for i in 0..10 {
            let d2: f64 = (0..3).map(|j| (x[j] - train.snapshot(i)[j]).powi(2)).sum();
            direct += alpha[i] * (-d2 / (2.0 * 0.81)).exp();
        }
        assert!((ef.eval(&x).unwrap() - direct).norm() < 1e-14);
    }

    #[test]
    fn json_round_trip_and_hash_check() {
        let traj = random_traj(8, 25, 2);
        let data = PairedDataset::from_trajectory(&traj, 1).unwrap();
        let dec = fit(&data, KernelSpec::gaussian(1.0).unwrap(), 0.1, OperatorKind::PerronFrobenius, Some(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("dec.json");
        let train = dir.path().join("training.kto");
        dec.save_json(&json, &train).unwrap();
        let text = fs::read_to_string(&json).unwrap();
        assert!(text.contains("\"path\": \"training.kto\""));
        let back = EigenDecomposition::load_json(&json).unwrap();
        assert_eq!(back.eigenvalues(), dec.eigenvalues());
        assert_eq!(back.coefficients(), dec.coefficients());
        assert_eq!(back.operator_kind(), OperatorKind::PerronFrobenius);
        assert_eq!(back.training_x().data(), dec.training_x().data());

        let other = SnapshotSet::from_scalars(&[1.0, 2.0]).unwrap();
        tensordata::save(&other, &train, tensordata::Format::Kto1).unwrap();
        assert!(matches!(
            EigenDecomposition::load_json(&json),
            Err(Error::HashMismatch { .. })
        ));
    }
}
