//! Thin wrappers over faer's dense factorizations.

use std::cmp::Ordering;

use faer::linalg::solvers::{Llt, PartialPivLu, Solve};
use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Condition estimates above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

enum Factor {
    Cholesky(Llt<f64>),
    Lu(PartialPivLu<f64>),
}

/// A factored `G + eps * I`, reused for every solve against it.
pub(crate) struct RegularizedSystem {
    factor: Factor,
}

impl RegularizedSystem {
    /// Cholesky when `G + eps I` is numerically positive definite, partial
    /// pivoting LU otherwise. The condition estimate is the squared ratio of
    /// extreme Cholesky diagonals, or the ratio of extreme `|U_ii|` for LU.
    pub fn new(g: MatRef<'_, f64>, eps: f64) -> Result<Self> {
        let n = g.nrows();
        let a = Mat::from_fn(n, n, |i, j| g[(i, j)] + if i == j { eps } else { 0.0 });
        let (factor, condition) = match a.llt(Side::Lower) {
            Ok(llt) => {
                let l = llt.L();
                let cond = diag_ratio((0..n).map(|i| l[(i, i)].abs())).powi(2);
                (Factor::Cholesky(llt), cond)
            }
            Err(_) => {
                let lu = a.partial_piv_lu();
                let u = lu.U();
                let cond = diag_ratio((0..n).map(|i| u[(i, i)].abs()));
                (Factor::Lu(lu), cond)
            }
        };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularProblem { condition });
        }
        Ok(Self { factor })
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        match &self.factor {
            Factor::Cholesky(f) => f.solve(rhs),
            Factor::Lu(f) => f.solve(rhs),
        }
    }

    pub fn solve_complex(&self, rhs: MatRef<'_, c64>) -> Mat<c64> {
        let re = Mat::from_fn(rhs.nrows(), rhs.ncols(), |i, j| rhs[(i, j)].re);
        let im = Mat::from_fn(rhs.nrows(), rhs.ncols(), |i, j| rhs[(i, j)].im);
        let (re, im) = (self.solve(re.as_ref()), self.solve(im.as_ref()));
        Mat::from_fn(rhs.nrows(), rhs.ncols(), |i, j| c64::new(re[(i, j)], im[(i, j)]))
    }
}

fn diag_ratio(diag: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Decreasing real part, ties broken by decreasing imaginary part.
pub fn spectral_order(a: &c64, b: &c64) -> Ordering {
    b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
}

/// Eigenpairs of a real square matrix in [`spectral_order`].
pub(crate) fn sorted_eigen(m: MatRef<'_, f64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let n = m.nrows();
    let evd = m
        .eigen()
        .map_err(|e| Error::ConvergenceFailure(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| spectral_order(&s[i], &s[j]));
    let values: Vec<c64> = order.iter().map(|&i| s[i]).collect();
    if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::ConvergenceFailure("non-finite eigenvalue".into()));
    }
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok((values, vectors))
}

/// `|M v - lambda v| / |v|` for a real `M` and complex pair.
pub(crate) fn eigen_residual(m: MatRef<'_, f64>, lambda: c64, v: &[c64]) -> f64 {
    let n = m.nrows();
    let mut res = 0.0;
    for i in 0..n {
        let mut acc = c64::new(0.0, 0.0);
        for (j, vj) in v.iter().enumerate() {
            acc += *vj * m[(i, j)];
        }
        res += (acc - lambda * v[i]).norm_sqr();
    }
    let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if vn == 0.0 {
        return 0.0;
    }
    (res / vn).sqrt()
}

pub(crate) fn frobenius(m: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_breaks_ties_by_imaginary_part() {
        let mut v = vec![
            c64::new(0.5, -0.2),
            c64::new(1.0, 0.0),
            c64::new(0.5, 0.2),
            c64::new(-1.0, 0.0),
        ];
        v.sort_by(spectral_order);
        assert_eq!(
            v,
            vec![
                c64::new(1.0, 0.0),
                c64::new(0.5, 0.2),
                c64::new(0.5, -0.2),
                c64::new(-1.0, 0.0)
            ]
        );
    }

    #[test]
    fn singular_system_is_rejected() {
        let g = Mat::from_fn(2, 2, |_, _| 1.0);
        assert!(matches!(
            RegularizedSystem::new(g.as_ref(), 0.0),
            Err(Error::SingularProblem { .. })
        ));
        assert!(RegularizedSystem::new(g.as_ref(), 0.1).is_ok());
    }

    #[test]
    fn indefinite_falls_back_to_lu() {
        let g = Mat::from_fn(2, 2, |i, j| if i == j { 0.0 } else { 1.0 });
        let sys = RegularizedSystem::new(g.as_ref(), 0.0).unwrap();
        let rhs = Mat::from_fn(2, 1, |i, _| (i + 1) as f64);
        let x = sys.solve(rhs.as_ref());
        assert!((x[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((x[(1, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_eigenpairs() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let m = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => c,
            (0, 1) => -s,
            _ => s,
        });
        let (vals, vecs) = sorted_eigen(m.as_ref()).unwrap();
        assert!((vals[0] - c64::new(c, s)).norm() < 1e-14);
        assert!((vals[1] - c64::new(c, -s)).norm() < 1e-14);
        for k in 0..2 {
            let v: Vec<c64> = (0..2).map(|i| vecs[(i, k)]).collect();
            assert!(eigen_residual(m.as_ref(), vals[k], &v) < 1e-14);
        }
    }
}
