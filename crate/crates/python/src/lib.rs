//! Python bindings for `kto-core`.
//!
//! Snapshot sets cross the boundary as NumPy arrays whose leading axis
//! indexes snapshots; complex results come back as `complex128` arrays.

use std::path::PathBuf;

use kto_core::changepoint::JumpStatistic;
use kto_core::kernels::median_pairwise_distance;
use kto_core::tensordata::{self, Format};
use kto_core::{
    c64, DetectConfig, Direction, EigenDecomposition, Eigenfunction, Error, KernelSpec,
    OperatorKind, OptimizationResult, OptimizeConfig, PairedDataset, PendulumConfig,
    PolynomialFeatures, Potential, SdeConfig, SnapshotSet, StartPolicy,
};
use numpy::{PyArray1, PyArray2, PyArrayDyn, PyArrayMethods, PyReadonlyArrayDyn, PyUntypedArrayMethods};
use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

create_exception!(kto, KtoError, PyValueError, "Errors raised by the kto core library.");

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => KtoError::new_err(other.to_string()),
    }
}

fn format_named(name: Option<&str>, path: &std::path::Path) -> PyResult<Format> {
    Ok(match name {
        None | Some("auto") => Format::infer(path).map_err(err)?,
        Some("csv") => Format::Csv { header: false },
        Some("csv-header") => Format::Csv { header: true },
        Some("kto") | Some("kto1") => Format::Kto1,
        Some("pgm") => Format::Pgm,
        Some("ppm") => Format::Ppm,
        Some(other) => return Err(PyValueError::new_err(format!("unknown format {other:?}"))),
    })
}

fn operator_named(name: &str) -> PyResult<OperatorKind> {
    match name {
        "koopman" => Ok(OperatorKind::Koopman),
        "pf" | "perron-frobenius" => Ok(OperatorKind::PerronFrobenius),
        _ => Err(PyValueError::new_err(format!("unknown operator {name:?}; use koopman or pf"))),
    }
}

fn complex_array<'py>(py: Python<'py>, values: &[c64]) -> Bound<'py, PyArray1<c64>> {
    PyArray1::from_slice(py, values)
}

/// A set of equally shaped snapshots, optionally with a time step.
#[pyclass(name = "SnapshotSet", module = "kto", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySnapshotSet {
    inner: SnapshotSet,
}

#[pymethods]
impl PySnapshotSet {
    /// `data` has shape `(count, *snapshot_shape)`; a 1-D array is a
    /// sequence of scalars.
    #[new]
    #[pyo3(signature = (data, dt=None))]
    fn new(data: PyReadonlyArrayDyn<'_, f64>, dt: Option<f64>) -> PyResult<Self> {
        let shape = data.shape();
        if shape.is_empty() {
            return Err(PyValueError::new_err("data must have at least one axis"));
        }
        let snapshot_shape = if shape.len() == 1 { vec![1] } else { shape[1..].to_vec() };
        let values: Vec<f64> = data.as_array().iter().copied().collect();
        let mut set = SnapshotSet::new(snapshot_shape, values).map_err(err)?;
        if let Some(dt) = dt {
            set = set.with_dt(dt).map_err(err)?;
        }
        Ok(Self { inner: set })
    }

    #[staticmethod]
    #[pyo3(signature = (path, format=None))]
    fn load(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let fmt = format_named(format, &path)?;
        Ok(Self { inner: tensordata::load(&path, fmt).map_err(err)? })
    }

    #[pyo3(signature = (path, format=None))]
    fn save(&self, path: PathBuf, format: Option<&str>) -> PyResult<()> {
        let fmt = format_named(format, &path)?;
        tensordata::save(&self.inner, &path, fmt).map_err(err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn count(&self) -> usize {
        self.inner.count()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn dt(&self) -> Option<f64> {
        self.inner.dt()
    }

    /// SHA-256 of the canonical binary encoding.
    fn content_hash(&self) -> String {
        tensordata::content_hash(&self.inner)
    }

    fn subsample(&self, stride: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.subsample(stride).map_err(err)? })
    }

    /// The data as an array of shape `(count, *shape)`.
    fn to_numpy<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
        let mut dims = vec![self.inner.count()];
        dims.extend_from_slice(self.inner.shape());
        PyArray1::from_slice(py, self.inner.data()).reshape(dims)
    }

    fn __len__(&self) -> usize {
        self.inner.count()
    }

    fn __repr__(&self) -> String {
        format!(
            "SnapshotSet(count={}, shape={:?}, dt={:?})",
            self.inner.count(),
            self.inner.shape(),
            self.inner.dt()
        )
    }
}

/// Gaussian or polynomial kernel on flattened snapshots.
#[pyclass(name = "Kernel", module = "kto", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyKernel {
    inner: KernelSpec,
}

#[pymethods]
impl PyKernel {
    #[staticmethod]
    fn gaussian(sigma: f64) -> PyResult<Self> {
        Ok(Self { inner: KernelSpec::gaussian(sigma).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (degree, offset=1.0))]
    fn polynomial(degree: u32, offset: f64) -> PyResult<Self> {
        Ok(Self { inner: KernelSpec::polynomial(degree, offset).map_err(err)? })
    }

    fn __call__(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&x, &y).map_err(err)
    }

    /// Gradient with respect to the first argument.
    fn grad<'py>(&self, py: Python<'py>, x: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'py, PyArray1<f64>>> {
        Ok(PyArray1::from_vec(py, self.inner.grad_x(&x, &y).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        match self.inner {
            KernelSpec::Gaussian { sigma } => format!("Kernel.gaussian({sigma})"),
            KernelSpec::Polynomial { degree, offset } => format!("Kernel.polynomial({degree}, {offset})"),
        }
    }
}

/// One eigenfunction `phi(x) = sum_i alpha_i k(x, x_i)`.
#[pyclass(name = "Eigenfunction", module = "kto", frozen)]
struct PyEigenfunction {
    inner: Eigenfunction,
}

#[pymethods]
impl PyEigenfunction {
    #[getter]
    fn eigenvalue(&self) -> c64 {
        self.inner.eigenvalue()
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<c64> {
        self.inner.eval(&x).map_err(err)
    }

    fn grad<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyArray1<c64>>> {
        Ok(complex_array(py, &self.inner.grad(&x).map_err(err)?))
    }

    /// Minimizes or maximizes `Re phi` by projected gradient steps.
    #[pyo3(signature = (x0, direction="maximize", bounds=None, max_iters=None, tol=None))]
    fn optimize<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        direction: &str,
        bounds: Option<(f64, f64)>,
        max_iters: Option<usize>,
        tol: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let dir = match direction {
            "maximize" | "max" => Direction::Maximize,
            "minimize" | "min" => Direction::Minimize,
            _ => return Err(PyValueError::new_err("direction must be minimize or maximize")),
        };
        let cfg = optimizer(bounds, max_iters, tol);
        let r = py
            .detach(|| kto_core::optimize(&self.inner, &x0, dir, &cfg))
            .map_err(err)?;
        result_dict(py, &r)
    }
}

fn optimizer(bounds: Option<(f64, f64)>, max_iters: Option<usize>, tol: Option<f64>) -> OptimizeConfig {
    let mut cfg = OptimizeConfig::with_bounds(bounds);
    if let Some(m) = max_iters {
        cfg.max_iters = m;
    }
    if let Some(t) = tol {
        cfg.tol = t;
    }
    cfg
}

fn result_dict<'py>(py: Python<'py>, r: &OptimizationResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x_star", PyArray1::from_slice(py, &r.x_star))?;
    d.set_item("value", r.value)?;
    d.set_item("imag", r.imag)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("evaluations", r.evaluations)?;
    d.set_item("converged", r.converged)?;
    d.set_item("final_eta", r.final_eta)?;
    let rows: Vec<Vec<f64>> = r
        .trace
        .iter()
        .map(|p| vec![p.iteration as f64, p.value, p.eta, p.imag])
        .collect();
    d.set_item("trace", PyArray2::from_vec2(py, &rows).map_err(|e| PyValueError::new_err(e.to_string()))?)?;
    Ok(d)
}

/// Leading eigenpairs of a kernel transfer operator estimate.
#[pyclass(name = "EigenDecomposition", module = "kto", frozen)]
struct PyDecomposition {
    inner: EigenDecomposition,
}

#[pymethods]
impl PyDecomposition {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: EigenDecomposition::load_json(&path).map_err(err)? })
    }

    /// Writes the JSON model and the training snapshots it refers to.
    fn save(&self, json_path: PathBuf, training_path: PathBuf) -> PyResult<()> {
        self.inner.save_json(&json_path, &training_path).map_err(err)
    }

    #[getter]
    fn eigenvalues<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<c64>> {
        complex_array(py, self.inner.eigenvalues())
    }

    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.inner.residuals().to_vec()
    }

    /// Coefficient matrix, one column per eigenfunction.
    #[getter]
    fn coefficients<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyArray2<c64>>> {
        let m = self.inner.coefficients();
        let rows: Vec<Vec<c64>> =
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect();
        PyArray2::from_vec2(py, &rows).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn operator(&self) -> &'static str {
        match self.inner.operator_kind() {
            OperatorKind::Koopman => "koopman",
            OperatorKind::PerronFrobenius => "pf",
        }
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    #[getter]
    fn lag_time(&self) -> f64 {
        self.inner.lag_time()
    }

    #[getter]
    fn kernel(&self) -> PyKernel {
        PyKernel { inner: *self.inner.kernel() }
    }

    #[getter]
    fn training(&self) -> PySnapshotSet {
        PySnapshotSet { inner: self.inner.training_x().clone() }
    }

    /// Implied timescales `-lag_time / ln|lambda|`.
    fn timescales(&self) -> Vec<f64> {
        let lag = self.inner.lag_time();
        self.inner.eigenvalues().iter().map(|l| kto_core::timescale(*l, lag)).collect()
    }

    /// Eigenfunction with 1-based index.
    fn eigenfunction(&self, index: usize) -> PyResult<PyEigenfunction> {
        Ok(PyEigenfunction { inner: self.inner.eigenfunction(index).map_err(err)? })
    }

    /// Values of the listed eigenfunctions along `traj`, shape
    /// `(len(indices), traj.count)`.
    fn series<'py>(
        &self,
        py: Python<'py>,
        traj: &PySnapshotSet,
        indices: Vec<usize>,
    ) -> PyResult<Bound<'py, PyArray2<c64>>> {
        let rows = py.detach(|| self.inner.series(&traj.inner, &indices)).map_err(err)?;
        PyArray2::from_vec2(py, &rows).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Extreme snapshots of each listed eigenfunction.
    #[pyo3(signature = (indices, start="best-observed", bounds=None, max_iters=None, tol=None))]
    fn summarize<'py>(
        &self,
        py: Python<'py>,
        indices: Vec<usize>,
        start: &str,
        bounds: Option<(f64, f64)>,
        max_iters: Option<usize>,
        tol: Option<f64>,
    ) -> PyResult<Bound<'py, PyList>> {
        let policy = match start {
            "best-observed" => StartPolicy::BestObserved,
            "mean" => StartPolicy::Mean,
            _ => return Err(PyValueError::new_err("start must be best-observed or mean")),
        };
        let cfg = optimizer(bounds, max_iters, tol);
        let pairs = py
            .detach(|| kto_core::summarize_all(&self.inner, &indices, policy, &cfg))
            .map_err(err)?;
        let out = PyList::empty(py);
        for p in &pairs {
            let d = PyDict::new(py);
            d.set_item("index", p.index)?;
            d.set_item("min", result_dict(py, &p.min)?)?;
            d.set_item("max", result_dict(py, &p.max)?)?;
            out.append(d)?;
        }
        Ok(out)
    }

    /// Change points of the listed eigenfunctions along `traj`.
    #[pyo3(signature = (traj, indices=vec![2, 3], rel_threshold=0.4, min_separation=5, median_window=None))]
    fn change_points<'py>(
        &self,
        py: Python<'py>,
        traj: &PySnapshotSet,
        indices: Vec<usize>,
        rel_threshold: f64,
        min_separation: usize,
        median_window: Option<usize>,
    ) -> PyResult<Bound<'py, PyList>> {
        let cfg = DetectConfig {
            rel_threshold,
            min_separation,
            statistic: match median_window {
                None => JumpStatistic::FirstDifference,
                Some(window) => JumpStatistic::RollingMedian { window },
            },
        };
        let report = kto_core::detect_with(&self.inner, &traj.inner, &indices, &cfg).map_err(err)?;
        let out = PyList::empty(py);
        for e in &report.events {
            let d = PyDict::new(py);
            d.set_item("time_index", e.time_index)?;
            d.set_item("eigen_index", e.eigen_index)?;
            d.set_item("jump", e.jump)?;
            d.set_item("timescale", e.timescale)?;
            out.append(d)?;
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "EigenDecomposition(operator={}, num_eigs={}, epsilon={})",
            self.operator(),
            self.inner.num_eigs(),
            self.inner.epsilon()
        )
    }
}

fn paired(traj: &PySnapshotSet, lag: usize, max_pairs: Option<usize>) -> PyResult<PairedDataset> {
    let count = traj.inner.count();
    let stride = match max_pairs {
        Some(0) => return Err(PyValueError::new_err("max_pairs must be positive")),
        Some(m) if count > lag => (count - lag).div_ceil(m),
        _ => 1,
    };
    PairedDataset::from_trajectory_strided(&traj.inner, lag, stride).map_err(err)
}

/// Fits a kernel Koopman (`"koopman"`) or Perron-Frobenius (`"pf"`)
/// operator on the lagged pairs of `traj`.
#[pyfunction]
#[pyo3(signature = (traj, kernel, epsilon, lag=1, operator="koopman", num_eigs=None, max_pairs=None))]
fn fit(
    py: Python<'_>,
    traj: &PySnapshotSet,
    kernel: &PyKernel,
    epsilon: f64,
    lag: usize,
    operator: &str,
    num_eigs: Option<usize>,
    max_pairs: Option<usize>,
) -> PyResult<PyDecomposition> {
    let kind = operator_named(operator)?;
    let data = paired(traj, lag, max_pairs)?;
    let inner = py
        .detach(|| kto_core::fit(&data, kernel.inner, epsilon, kind, num_eigs))
        .map_err(err)?;
    Ok(PyDecomposition { inner })
}

/// Fits on explicit pairs `(x[i], y[i])`.
#[pyfunction]
#[pyo3(signature = (x, y, kernel, epsilon, operator="koopman", num_eigs=None))]
fn fit_pairs(
    py: Python<'_>,
    x: &PySnapshotSet,
    y: &PySnapshotSet,
    kernel: &PyKernel,
    epsilon: f64,
    operator: &str,
    num_eigs: Option<usize>,
) -> PyResult<PyDecomposition> {
    let kind = operator_named(operator)?;
    let data = PairedDataset::new(x.inner.clone(), y.inner.clone(), 1).map_err(err)?;
    let inner = py
        .detach(|| kto_core::fit(&data, kernel.inner, epsilon, kind, num_eigs))
        .map_err(err)?;
    Ok(PyDecomposition { inner })
}

/// Exact DMD of the lagged pairs of `traj`. Returns eigenvalues, modes
/// (one column per eigenvalue) and the rank used.
#[pyfunction]
#[pyo3(signature = (traj, lag=1, rank=None, svd_tol=kto_core::baselines::DEFAULT_SVD_TOL))]
fn exact_dmd<'py>(
    py: Python<'py>,
    traj: &PySnapshotSet,
    lag: usize,
    rank: Option<usize>,
    svd_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let data = paired(traj, lag, None)?;
    let r = kto_core::exact_dmd(&data, rank, svd_tol).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("eigenvalues", complex_array(py, &r.eigenvalues))?;
    let rows: Vec<Vec<c64>> = (0..r.modes.nrows())
        .map(|i| (0..r.modes.ncols()).map(|j| r.modes[(i, j)]).collect())
        .collect();
    d.set_item("modes", PyArray2::from_vec2(py, &rows).map_err(|e| PyValueError::new_err(e.to_string()))?)?;
    d.set_item("rank_used", r.rank_used)?;
    Ok(d)
}

/// Eigenvalues of the regularized covariance operator built from the
/// explicit polynomial feature map.
#[pyfunction]
#[pyo3(signature = (x, y, degree, offset, eps_tilde, operator="koopman"))]
fn covariance_oracle<'py>(
    py: Python<'py>,
    x: &PySnapshotSet,
    y: &PySnapshotSet,
    degree: u32,
    offset: f64,
    eps_tilde: f64,
    operator: &str,
) -> PyResult<Bound<'py, PyArray1<c64>>> {
    let kind = operator_named(operator)?;
    let data = PairedDataset::new(x.inner.clone(), y.inner.clone(), 1).map_err(err)?;
    let features = PolynomialFeatures::new(x.inner.dim(), degree, offset).map_err(err)?;
    let values = kto_core::covariance_oracle(&data, &features, eps_tilde, kind).map_err(err)?;
    Ok(complex_array(py, &values))
}

/// Median distance between (up to `max_points`) snapshots.
#[pyfunction]
#[pyo3(signature = (set, max_points=500))]
fn median_distance(set: &PySnapshotSet, max_points: usize) -> f64 {
    median_pairwise_distance(&set.inner, max_points)
}

/// Euler-Maruyama run of the overdamped Langevin equation. Returns the
/// stored trajectory and per-state basin labels.
#[pyfunction]
#[pyo3(signature = (potential=None, diffusion=None, dt=None, n_steps=None, x0=None, seed=None, store_stride=None))]
fn simulate(
    py: Python<'_>,
    potential: Option<Vec<f64>>,
    diffusion: Option<f64>,
    dt: Option<f64>,
    n_steps: Option<usize>,
    x0: Option<f64>,
    seed: Option<u64>,
    store_stride: Option<usize>,
) -> PyResult<(PySnapshotSet, Vec<usize>)> {
    let mut cfg = SdeConfig::triple_well_default();
    if let Some(c) = potential {
        cfg.potential = Potential::new(c).map_err(err)?;
    }
    cfg.diffusion = diffusion.unwrap_or(cfg.diffusion);
    cfg.dt = dt.unwrap_or(cfg.dt);
    cfg.n_steps = n_steps.unwrap_or(cfg.n_steps);
    cfg.x0 = x0.unwrap_or(cfg.x0);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.store_stride = store_stride.unwrap_or(cfg.store_stride);
    let sim = py.detach(|| kto_core::simulate(&cfg)).map_err(err)?;
    Ok((PySnapshotSet { inner: sim.trajectory }, sim.labels.labels))
}

/// Synthetic video of a Gaussian blob swinging left and right.
#[pyfunction]
#[pyo3(signature = (n_frames=None, width=None, height=None, period_frames=None, amplitude_px=None, noise_sigma=None, seed=None))]
fn render_pendulum(
    n_frames: Option<usize>,
    width: Option<usize>,
    height: Option<usize>,
    period_frames: Option<usize>,
    amplitude_px: Option<f64>,
    noise_sigma: Option<f64>,
    seed: Option<u64>,
) -> PyResult<PySnapshotSet> {
    let mut cfg = PendulumConfig::default();
    cfg.n_frames = n_frames.unwrap_or(cfg.n_frames);
    cfg.width = width.unwrap_or(cfg.width);
    cfg.height = height.unwrap_or(cfg.height);
    cfg.period_frames = period_frames.unwrap_or(cfg.period_frames);
    cfg.amplitude_px = amplitude_px.unwrap_or(cfg.amplitude_px);
    cfg.noise_sigma = noise_sigma.unwrap_or(cfg.noise_sigma);
    cfg.seed = seed.unwrap_or(cfg.seed);
    Ok(PySnapshotSet { inner: kto_core::render_pendulum(&cfg).map_err(err)? })
}

#[pymodule]
fn kto(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("KtoError", m.py().get_type::<KtoError>())?;
    m.add_class::<PySnapshotSet>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyEigenfunction>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(exact_dmd, m)?)?;
    m.add_function(wrap_pyfunction!(covariance_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(median_distance, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(render_pendulum, m)?)?;
    Ok(())
}
