//! Dense helpers shared by the solvers. Every matrix here is expressed in an
//! orthonormal frame, so adjoints are transposes.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance on `||S - S^T||` for operators declared self-adjoint.
pub const SYM_TOL: f64 = 1e-10;

/// Default cap on the condition number used as the "bounded inverse" surrogate.
pub const KAPPA_MAX: f64 = 1e12;

/// Positivity threshold `1e-9 (1 + ||op||)`.
pub fn tol_pos(norm: f64) -> f64 {
    1e-9 * (1.0 + norm)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a, &s| a.max(s))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn asym_residual(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Extreme eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, Copy)]
pub struct SymSpectrum {
    pub min: f64,
    pub max: f64,
    pub min_abs: f64,
    pub max_abs: f64,
}

impl SymSpectrum {
    pub fn cond(&self) -> f64 {
        if self.min_abs == 0.0 {
            f64::INFINITY
        } else {
            self.max_abs / self.min_abs
        }
    }
}

fn spectrum_of(values: impl Iterator<Item = f64>) -> SymSpectrum {
    let mut s = SymSpectrum {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        min_abs: f64::INFINITY,
        max_abs: 0.0,
    };
    for v in values {
        s.min = s.min.min(v);
        s.max = s.max.max(v);
        s.min_abs = s.min_abs.min(v.abs());
        s.max_abs = s.max_abs.max(v.abs());
    }
    s
}

/// Spectrum of the symmetric part of `m`.
pub fn sym_spectrum(m: &DMatrix<f64>) -> SymSpectrum {
    let e = SymmetricEigen::new(symmetrize(m));
    spectrum_of(e.eigenvalues.iter().copied())
}

/// Inverse of a symmetric matrix through its eigendecomposition, refusing
/// condition numbers above `kappa_max`.
pub fn sym_inverse(m: &DMatrix<f64>, kappa_max: f64) -> Result<(DMatrix<f64>, SymSpectrum)> {
    let e = SymmetricEigen::new(symmetrize(m));
    let spec = spectrum_of(e.eigenvalues.iter().copied());
    let cond = spec.cond();
    if !(cond <= kappa_max) {
        return Err(Error::IllConditioned { cond, max: kappa_max });
    }
    let inv_vals = e.eigenvalues.map(|v| 1.0 / v);
    let v = &e.eigenvectors;
    let inv = v * DMatrix::from_diagonal(&inv_vals) * v.transpose();
    Ok((symmetrize(&inv), spec))
}
