use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::OperatorExpr;
use crate::error::{Error, Result};
use crate::linalg::{self, SYM_TOL};

/// Spectral certificate for a self-adjoint operator on its truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfAdjointCert {
    pub min_eig: f64,
    pub max_eig: f64,
    pub cond: f64,
    /// Positivity threshold that applies to this operator.
    pub tol: f64,
}

impl SelfAdjointCert {
    /// Certificate of a symmetric matrix given in an orthonormal frame.
    pub fn of_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let scale = 1.0 + m.amax();
        let residual = linalg::asym_residual(m);
        let tol = SYM_TOL * scale;
        if residual > tol {
            return Err(Error::NotSelfAdjoint { residual, tol });
        }
        Ok(Self::from_spectrum(&linalg::sym_spectrum(m)))
    }

    pub(crate) fn from_spectrum(spec: &linalg::SymSpectrum) -> Self {
        SelfAdjointCert {
            min_eig: spec.min,
            max_eig: spec.max,
            cond: spec.cond(),
            tol: linalg::tol_pos(spec.max_abs),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.min_eig > self.tol
    }

    pub fn is_nonnegative(&self) -> bool {
        self.min_eig >= -self.tol
    }

    /// Fails with `NotPositive` unless `min_eig > tol`.
    pub fn require_positive(&self) -> Result<()> {
        if self.is_positive() {
            Ok(())
        } else {
            Err(Error::NotPositive {
                min_eig: self.min_eig,
                tol: self.tol,
            })
        }
    }
}

fn require_square(op: &OperatorExpr) -> Result<()> {
    if op.is_square() {
        Ok(())
    } else {
        Err(Error::dim("self-adjoint checks need an operator on a single space"))
    }
}

/// Smallest eigenvalue of the symmetric truncation of `op`.
pub fn min_eig_selfadjoint(op: &OperatorExpr) -> Result<SelfAdjointCert> {
    require_square(op)?;
    SelfAdjointCert::of_matrix(&op.ortho_matrix())
}

/// Inverse of a positive operator, rejecting condition numbers above `kappa_max`.
pub fn invert_positive(op: &OperatorExpr, kappa_max: f64) -> Result<OperatorExpr> {
    let cert = min_eig_selfadjoint(op)?;
    cert.require_positive()?;
    let m = op.ortho_matrix();
    let (inv, _) = linalg::sym_inverse(&m, kappa_max)?;
    let residual = (&m * &inv - DMatrix::identity(m.nrows(), m.nrows())).amax();
    if residual > 1e-6 {
        return Err(Error::IllConditioned {
            cond: cert.cond,
            max: kappa_max,
        });
    }
    OperatorExpr::from_ortho(op.domain().clone(), op.codomain().clone(), &inv)
}

/// `M11 - M21* M22^{-1} M21` for `M11` on H, `M21: H -> U`, `M22` on U.
pub fn schur_complement(m11: &OperatorExpr, m21: &OperatorExpr, m22: &OperatorExpr) -> Result<OperatorExpr> {
    check_blocks(m11, m21, m22)?;
    min_eig_selfadjoint(m22)?.require_positive()?;
    let b = m21.ortho_matrix();
    let (inv, _) = linalg::sym_inverse(&m22.ortho_matrix(), f64::INFINITY)?;
    let s = m11.ortho_matrix() - b.transpose() * inv * &b;
    OperatorExpr::from_ortho(m11.domain().clone(), m11.codomain().clone(), &linalg::symmetrize(&s))
}

/// Certificate of the block operator `[[M11, M21*], [M21, M22]]` on H x U,
/// using the product inner product.
pub fn block_cert(m11: &OperatorExpr, m21: &OperatorExpr, m22: &OperatorExpr) -> Result<SelfAdjointCert> {
    check_blocks(m11, m21, m22)?;
    SelfAdjointCert::of_matrix(&block_matrix(
        &m11.ortho_matrix(),
        &m21.ortho_matrix(),
        &m22.ortho_matrix(),
    ))
}

pub(crate) fn block_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), c.nrows());
    let mut full = DMatrix::zeros(n + m, n + m);
    full.view_mut((0, 0), (n, n)).copy_from(a);
    full.view_mut((n, 0), (m, n)).copy_from(b);
    full.view_mut((0, n), (n, m)).copy_from(&b.transpose());
    full.view_mut((n, n), (m, m)).copy_from(c);
    full
}

fn check_blocks(m11: &OperatorExpr, m21: &OperatorExpr, m22: &OperatorExpr) -> Result<()> {
    require_square(m11)?;
    require_square(m22)?;
    m21.domain().ensure_same(m11.domain(), "block (2,1) domain")?;
    m21.codomain().ensure_same(m22.domain(), "block (2,1) codomain")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Space;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(rows: usize, cols: usize, v: &[f64]) -> OperatorExpr {
        OperatorExpr::dense(
            Space::euclidean(cols),
            Space::euclidean(rows),
            DMatrix::from_row_slice(rows, cols, v),
        )
        .unwrap()
    }

    #[test]
    fn identity_certificate() {
        let cert = min_eig_selfadjoint(&OperatorExpr::identity(Space::ell2(6))).unwrap();
        assert_eq!(cert.min_eig, 1.0);
        assert!(cert.is_positive());
    }

    #[test]
    fn diagonal_minimum() {
        let g2 = 1.7f64 * 1.7;
        let op = OperatorExpr::diagonal(Space::euclidean(4), vec![g2 - 1.0, g2, g2, g2]).unwrap();
        let cert = min_eig_selfadjoint(&op).unwrap();
        assert!((cert.min_eig - (g2 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn random_symmetric_matches_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let s = &a + a.transpose();
        let op = OperatorExpr::dense(Space::euclidean(5), Space::euclidean(5), s.clone()).unwrap();
        let want = s.symmetric_eigenvalues().min();
        assert!((min_eig_selfadjoint(&op).unwrap().min_eig - want).abs() < 1e-12);
    }

    #[test]
    fn non_symmetric_is_rejected() {
        let op = dense(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(min_eig_selfadjoint(&op), Err(Error::NotSelfAdjoint { .. })));
    }

    #[test]
    fn inverses() {
        let id = OperatorExpr::identity(Space::ell2(3));
        assert_eq!(invert_positive(&id, 1e12).unwrap().to_matrix(), DMatrix::identity(3, 3));
        let g = 1.8;
        let v = Space::euclidean(4);
        let inv = invert_positive(&OperatorExpr::scaled(g * g, OperatorExpr::identity(v)), 1e12).unwrap();
        assert!((inv.to_matrix() - DMatrix::identity(4, 4) / (g * g)).amax() < 1e-15);
        assert!(matches!(
            invert_positive(&dense(2, 2, &[1.0, 0.0, 0.0, -1.0]), 1e12),
            Err(Error::NotPositive { .. })
        ));
        assert!(matches!(
            invert_positive(&dense(2, 2, &[1.0, 0.0, 0.0, 1e-7]), 1e6),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn inverse_on_weighted_space_is_an_operator_inverse() {
        let s = Space::l2_line(1.0, 0.25);
        let k = OperatorExpr::gaussian_convolution(0.3, s.clone()).unwrap();
        let op = OperatorExpr::sum(OperatorExpr::identity(s.clone()), k).unwrap();
        let inv = invert_positive(&op, 1e12).unwrap();
        let prod = OperatorExpr::compose(op, inv).unwrap().to_matrix();
        assert!((prod - DMatrix::identity(s.dim(), s.dim())).amax() < 1e-12);
    }

    #[test]
    fn schur_examples() {
        let m11 = dense(1, 1, &[2.0]);
        let m21 = dense(1, 1, &[1.0]);
        let m22 = dense(1, 1, &[1.0]);
        let s = schur_complement(&m11, &m21, &m22).unwrap();
        assert!((s.to_matrix()[(0, 0)] - 1.0).abs() < 1e-15);
        let zero = OperatorExpr::zero(Space::euclidean(1), Space::euclidean(1));
        assert_eq!(
            schur_complement(&m11, &zero, &m22).unwrap().to_matrix(),
            m11.to_matrix()
        );
        assert!(matches!(
            schur_complement(&m11, &m21, &dense(1, 1, &[-1.0])),
            Err(Error::NotPositive { .. })
        ));
    }

    proptest! {
        #[test]
        fn schur_sign_matches_block_sign(seed in 0u64..10_000, n in 1usize..5, m in 1usize..4, shift in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = &g * g.transpose() + DMatrix::identity(n, n) * shift;
            let h = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let c = &h * h.transpose() + DMatrix::identity(m, m) * 0.1;
            let b = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let (hs, us) = (Space::euclidean(n), Space::euclidean(m));
            let m11 = OperatorExpr::dense(hs.clone(), hs.clone(), a).unwrap();
            let m21 = OperatorExpr::dense(hs.clone(), us.clone(), b).unwrap();
            let m22 = OperatorExpr::dense(us.clone(), us, c).unwrap();
            let full = block_cert(&m11, &m21, &m22).unwrap().min_eig;
            let schur = min_eig_selfadjoint(&schur_complement(&m11, &m21, &m22).unwrap()).unwrap().min_eig;
            prop_assume!(full.abs() > 1e-9 && schur.abs() > 1e-9);
            prop_assert_eq!(full > 0.0, schur > 0.0);
        }
    }
}
