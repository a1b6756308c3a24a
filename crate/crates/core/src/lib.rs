//! Kernel transfer operators for time-series snapshot data.
//!
//! The crate estimates kernel Koopman and kernel Perron-Frobenius operators
//! from lagged snapshot pairs through regularized Gram-matrix eigenproblems,
//! then puts their dominant eigenfunctions to work:
//!
//! - [`summarize`] synthesizes hypothetical snapshots that minimize or
//!   maximize an eigenfunction by projected gradient descent/ascent;
//! - [`changepoint`] flags jumps in eigenfunction time series and ranks them
//!   by the implied time scale of the eigenvalue;
//! - [`baselines`] provides exact DMD and an explicit-feature covariance
//!   operator used to cross-check the Gram-matrix route;
//! - [`synth`] generates ground-truth systems (a triple-well SDE and a
//!   rendered pendulum sequence).
//!
//! ```
//! use kto_core::{fit, KernelSpec, OperatorKind, PairedDataset, SnapshotSet};
//!
//! let traj = SnapshotSet::from_scalars(&[0.0, 0.9, 0.1, 1.0, 0.05, 0.95]).unwrap();
//! let pairs = PairedDataset::from_trajectory(&traj, 1).unwrap();
//! let kernel = KernelSpec::gaussian(0.5).unwrap();
//! let dec = fit(&pairs, kernel, 0.1, OperatorKind::Koopman, Some(2)).unwrap();
//! assert_eq!(dec.eigenvalues().len(), 2);
//! ```

pub mod baselines;
pub mod changepoint;
pub mod codec;
pub mod error;
pub mod kernels;
mod linalg;
pub mod operators;
pub mod summarize;
pub mod synth;
pub mod tensordata;

pub use baselines::{covariance_oracle, exact_dmd, DmdResult, PolynomialFeatures};
pub use changepoint::{detect, detect_with, timescale, ChangePointEvent, ChangePointReport, DetectConfig};
pub use error::{Error, Result};
pub use faer::c64;
pub use kernels::{gram, GramPack, KernelSpec};
pub use linalg::spectral_order;
pub use operators::{
    eigenfunction_series, eval_eigenfunction, fit, grad_eigenfunction, EigenDecomposition,
    Eigenfunction, OperatorKind,
};
pub use summarize::{optimize, summarize_all, Direction, OptimizationResult, OptimizeConfig, StartPolicy};
pub use synth::{render_pendulum, simulate, PendulumConfig, Potential, SdeConfig, Simulation, WellLabels};
pub use tensordata::{Format, PairedDataset, Preprocess, SnapshotSet};
