//! Time-indexed operator families shared by the system specifications.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{OperatorExpr, Space};
use crate::linalg::{self, SYM_TOL};

/// One operator per step `k = 0..=N`, or a single operator used at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OpSeq {
    Constant(OperatorExpr),
    Varying(Vec<OperatorExpr>),
}

impl From<OperatorExpr> for OpSeq {
    fn from(op: OperatorExpr) -> Self {
        OpSeq::Constant(op)
    }
}

impl From<Vec<OperatorExpr>> for OpSeq {
    fn from(ops: Vec<OperatorExpr>) -> Self {
        OpSeq::Varying(ops)
    }
}

impl OpSeq {
    /// Operator acting at step `k`. Panics if a varying family is shorter than `k + 1`,
    /// which `validate` rules out.
    pub fn at(&self, k: usize) -> &OperatorExpr {
        match self {
            OpSeq::Constant(op) => op,
            OpSeq::Varying(ops) => &ops[k],
        }
    }

    pub(crate) fn ortho(&self, k: usize) -> DMatrix<f64> {
        self.at(k).ortho_matrix()
    }

    /// Checks length `horizon + 1` and the domain/codomain of every member.
    pub fn validate(&self, horizon: usize, domain: &Space, codomain: &Space, what: &str) -> Result<()> {
        if let OpSeq::Varying(ops) = self {
            if ops.len() != horizon + 1 {
                return Err(Error::dim(format!(
                    "{what}: {} operators given for horizon {horizon} (need {})",
                    ops.len(),
                    horizon + 1
                )));
            }
        }
        for k in 0..=horizon {
            let op = self.at(k);
            op.validate()?;
            op.domain().ensure_same(domain, &format!("{what}({k}) domain"))?;
            op.codomain().ensure_same(codomain, &format!("{what}({k}) codomain"))?;
            if matches!(self, OpSeq::Constant(_)) {
                break;
            }
        }
        Ok(())
    }

    /// Additionally requires every member to be self-adjoint.
    pub fn validate_selfadjoint(&self, horizon: usize, space: &Space, what: &str) -> Result<()> {
        self.validate(horizon, space, space, what)?;
        for k in 0..=horizon {
            ensure_selfadjoint(self.at(k), what)?;
        }
        Ok(())
    }
}

pub(crate) fn ensure_selfadjoint(op: &OperatorExpr, what: &str) -> Result<()> {
    let m = op.ortho_matrix();
    let residual = linalg::asym_residual(&m);
    let tol = SYM_TOL * (1.0 + m.amax());
    if residual > tol {
        return Err(Error::Parse(format!(
            "{what} is not self-adjoint (residual {residual:.3e})"
        )));
    }
    Ok(())
}

/// `||X^T Y||_max` in orthonormal coordinates, used for the orthogonality
/// conditions on output maps.
pub(crate) fn cross_residual(x: &OperatorExpr, y: &OperatorExpr) -> f64 {
    (x.ortho_matrix().transpose() * y.ortho_matrix()).amax()
}
