//! Error measurement in `f64`.

use nalgebra::SymmetricEigen;

use crate::bounds::{self, BoundSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::qr::QrFactors;

/// Measured errors of one factorization and the matching bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// `‖A - Q̂R̂‖_F / ‖A‖_F`.
    pub backward: f64,
    /// `‖Q̂ᵀQ̂ - I‖_2`.
    pub orth: f64,
    /// `+inf` when the bound is undefined.
    pub bound_backward: f64,
    pub bound_orth: f64,
    pub overflows: usize,
}

impl ErrorReport {
    /// Whether both measurements respect every bound that is below one.
    pub fn within_bounds(&self) -> bool {
        (self.bound_backward >= 1.0 || self.backward <= self.bound_backward)
            && (self.bound_orth >= 1.0 || self.orth <= self.bound_orth)
    }
}

pub fn backward_error(a: &Matrix, q: &Matrix, r: &Matrix) -> Result<f64> {
    let residual = a.sub_f64(&q.matmul_f64(r)?)?;
    Ok(residual.frobenius_norm() / a.frobenius_norm())
}

/// `‖QᵀQ - I‖_2` through the eigenvalues of the symmetric defect.
pub fn orthogonality(q: &Matrix) -> Result<f64> {
    let n = q.cols();
    let defect = q
        .transpose()
        .matmul_f64(q)?
        .sub_f64(&Matrix::identity(n, n))?;
    let eig = SymmetricEigen::new(defect.to_nalgebra());
    Ok(eig.eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs())))
}

/// Measures `f` against `a`; bounds come from `spec` when given.
pub fn measure(a: &Matrix, f: &QrFactors, spec: Option<&BoundSpec>) -> Result<ErrorReport> {
    let (m, n) = a.shape();
    if f.q.shape() != (m, n) || f.r.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "factors {:?} and {:?} do not fit a {m}x{n} matrix",
            f.q.shape(),
            f.r.shape()
        )));
    }
    let (bound_backward, bound_orth) = match spec {
        Some(s) => match bounds::measurable_bounds(s) {
            Ok((b, o)) => (b.value, o.value),
            Err(Error::Domain(_)) => (f64::INFINITY, f64::INFINITY),
            Err(e) => return Err(e),
        },
        None => (f64::INFINITY, f64::INFINITY),
    };
    Ok(ErrorReport {
        backward: backward_error(a, &f.q, &f.r)?,
        orth: orthogonality(&f.q)?,
        bound_backward,
        bound_orth,
        overflows: 0,
    })
}
