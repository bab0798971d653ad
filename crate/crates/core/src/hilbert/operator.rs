use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{HVector, Space};
use crate::error::{Error, Result};

/// A bounded linear operator between two truncated spaces.
///
/// Structured variants keep their exact adjoint: `adjoint` is resolved
/// symbolically per variant, and only `Dense` falls back to a (weighted)
/// matrix transpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum OperatorExpr {
    Zero {
        domain: Space,
        codomain: Space,
    },
    Identity {
        space: Space,
    },
    Scaled {
        factor: f64,
        inner: Box<OperatorExpr>,
    },
    /// Coordinate matrix (codomain dim x domain dim), stored row-major in JSON.
    Dense {
        domain: Space,
        codomain: Space,
        #[serde(with = "crate::serde_rows")]
        matrix: DMatrix<f64>,
    },
    Diagonal {
        space: Space,
        entries: Vec<f64>,
    },
    /// `(a1, a2, ...) -> (0, a1, a2, ...)`, cut at the codomain dimension.
    RightShift {
        domain: Space,
        codomain: Space,
    },
    /// `(a1, a2, ...) -> (a2, a3, ...)`, the adjoint of `RightShift`.
    LeftShift {
        domain: Space,
        codomain: Space,
    },
    /// Injects a low-dimensional space into the leading coordinates.
    Filling {
        domain: Space,
        codomain: Space,
    },
    /// Keeps the leading coordinates; the adjoint of `Filling`.
    LeadingProjection {
        domain: Space,
        codomain: Space,
    },
    /// Convolution with a centred Gaussian density of standard deviation `width`.
    GaussianConvolution {
        width: f64,
        space: Space,
    },
    /// `exp(tau * alpha * d^2/dx^2)` with Dirichlet conditions, diagonal in sine modes.
    HeatSemigroup {
        alpha: f64,
        tau: f64,
        space: Space,
    },
    Sum {
        left: Box<OperatorExpr>,
        right: Box<OperatorExpr>,
    },
    /// `outer . inner`
    Compose {
        outer: Box<OperatorExpr>,
        inner: Box<OperatorExpr>,
    },
    Adjoint {
        inner: Box<OperatorExpr>,
    },
}

use OperatorExpr as Op;

fn require_unit(space: &Space, what: &str) -> Result<()> {
    if space.has_unit_weights() {
        Ok(())
    } else {
        Err(Error::dim(format!("{what} needs a space with unit coordinate weights")))
    }
}

impl OperatorExpr {
    pub fn zero(domain: Space, codomain: Space) -> Self {
        Op::Zero { domain, codomain }
    }

    pub fn identity(space: Space) -> Self {
        Op::Identity { space }
    }

    pub fn scaled(factor: f64, inner: OperatorExpr) -> Self {
        Op::Scaled {
            factor,
            inner: Box::new(inner),
        }
    }

    pub fn dense(domain: Space, codomain: Space, matrix: DMatrix<f64>) -> Result<Self> {
        let op = Op::Dense {
            domain,
            codomain,
            matrix,
        };
        op.validate()?;
        Ok(op)
    }

    pub fn diagonal(space: Space, entries: Vec<f64>) -> Result<Self> {
        let op = Op::Diagonal { space, entries };
        op.validate()?;
        Ok(op)
    }

    pub fn right_shift(domain: Space, codomain: Space) -> Result<Self> {
        let op = Op::RightShift { domain, codomain };
        op.validate()?;
        Ok(op)
    }

    pub fn filling(domain: Space, codomain: Space) -> Result<Self> {
        let op = Op::Filling { domain, codomain };
        op.validate()?;
        Ok(op)
    }

    pub fn gaussian_convolution(width: f64, space: Space) -> Result<Self> {
        let op = Op::GaussianConvolution { width, space };
        op.validate()?;
        Ok(op)
    }

    pub fn heat_semigroup(alpha: f64, tau: f64, space: Space) -> Result<Self> {
        let op = Op::HeatSemigroup { alpha, tau, space };
        op.validate()?;
        Ok(op)
    }

    pub fn sum(left: OperatorExpr, right: OperatorExpr) -> Result<Self> {
        let op = Op::Sum {
            left: Box::new(left),
            right: Box::new(right),
        };
        op.validate()?;
        Ok(op)
    }

    pub fn compose(outer: OperatorExpr, inner: OperatorExpr) -> Result<Self> {
        let op = Op::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        };
        op.validate()?;
        Ok(op)
    }

    /// Wraps a matrix expressed in orthonormal coordinates as a `Dense` operator.
    pub fn from_ortho(domain: Space, codomain: Space, ortho: &DMatrix<f64>) -> Result<Self> {
        let mut m = ortho.clone();
        if !codomain.has_unit_weights() {
            for (i, w) in codomain.weights().iter().enumerate() {
                m.row_mut(i).scale_mut(1.0 / w.sqrt());
            }
        }
        if !domain.has_unit_weights() {
            for (j, w) in domain.weights().iter().enumerate() {
                m.column_mut(j).scale_mut(w.sqrt());
            }
        }
        Self::dense(domain, codomain, m)
    }

    pub fn domain(&self) -> &Space {
        match self {
            Op::Zero { domain, .. }
            | Op::Dense { domain, .. }
            | Op::RightShift { domain, .. }
            | Op::LeftShift { domain, .. }
            | Op::Filling { domain, .. }
            | Op::LeadingProjection { domain, .. } => domain,
            Op::Identity { space }
            | Op::Diagonal { space, .. }
            | Op::GaussianConvolution { space, .. }
            | Op::HeatSemigroup { space, .. } => space,
            Op::Scaled { inner, .. } | Op::Compose { inner, .. } => inner.domain(),
            Op::Sum { left, .. } => left.domain(),
            Op::Adjoint { inner } => inner.codomain(),
        }
    }

    pub fn codomain(&self) -> &Space {
        match self {
            Op::Zero { codomain, .. }
            | Op::Dense { codomain, .. }
            | Op::RightShift { codomain, .. }
            | Op::LeftShift { codomain, .. }
            | Op::Filling { codomain, .. }
            | Op::LeadingProjection { codomain, .. } => codomain,
            Op::Identity { space }
            | Op::Diagonal { space, .. }
            | Op::GaussianConvolution { space, .. }
            | Op::HeatSemigroup { space, .. } => space,
            Op::Scaled { inner, .. } => inner.codomain(),
            Op::Compose { outer, .. } => outer.codomain(),
            Op::Sum { left, .. } => left.codomain(),
            Op::Adjoint { inner } => inner.domain(),
        }
    }

    /// Recursively checks shapes, space compatibility and variant preconditions.
    pub fn validate(&self) -> Result<()> {
        match self {
            Op::Zero { domain, codomain } => {
                domain.validate()?;
                codomain.validate()
            }
            Op::Identity { space } => space.validate(),
            Op::Scaled { factor, inner } => {
                if !factor.is_finite() {
                    return Err(Error::Parse("non-finite scale factor".into()));
                }
                inner.validate()
            }
            Op::Dense {
                domain,
                codomain,
                matrix,
            } => {
                domain.validate()?;
                codomain.validate()?;
                if matrix.nrows() != codomain.dim() || matrix.ncols() != domain.dim() {
                    return Err(Error::dim(format!(
                        "dense matrix is {}x{}, expected {}x{}",
                        matrix.nrows(),
                        matrix.ncols(),
                        codomain.dim(),
                        domain.dim()
                    )));
                }
                if matrix.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse("dense matrix has non-finite entries".into()));
                }
                Ok(())
            }
            Op::Diagonal { space, entries } => {
                space.validate()?;
                if entries.len() != space.dim() {
                    return Err(Error::dim(format!(
                        "diagonal has {} entries, space dimension {}",
                        entries.len(),
                        space.dim()
                    )));
                }
                Ok(())
            }
            Op::RightShift { domain, codomain } | Op::LeftShift { domain, codomain } => {
                domain.validate()?;
                codomain.validate()?;
                require_unit(domain, "shift")?;
                require_unit(codomain, "shift")
            }
            Op::Filling { domain, codomain } => {
                domain.validate()?;
                codomain.validate()?;
                require_unit(domain, "filling")?;
                require_unit(codomain, "filling")?;
                if domain.dim() > codomain.dim() {
                    return Err(Error::dim("filling needs dim(domain) <= dim(codomain)"));
                }
                Ok(())
            }
            Op::LeadingProjection { domain, codomain } => {
                domain.validate()?;
                codomain.validate()?;
                require_unit(domain, "projection")?;
                require_unit(codomain, "projection")?;
                if codomain.dim() > domain.dim() {
                    return Err(Error::dim("projection needs dim(codomain) <= dim(domain)"));
                }
                Ok(())
            }
            Op::GaussianConvolution { width, space } => {
                space.validate()?;
                if !matches!(space, Space::L2Line { .. }) {
                    return Err(Error::dim("gaussian convolution lives on an l2_line space"));
                }
                if !(*width > 0.0) {
                    return Err(Error::Parse("gaussian width must be positive".into()));
                }
                Ok(())
            }
            Op::HeatSemigroup { alpha, tau, space } => {
                space.validate()?;
                if !matches!(space, Space::L2Interval { .. }) {
                    return Err(Error::dim("heat semigroup lives on an l2_interval space"));
                }
                if !(*alpha >= 0.0) || !(*tau >= 0.0) {
                    return Err(Error::Parse("heat semigroup needs alpha, tau >= 0".into()));
                }
                Ok(())
            }
            Op::Sum { left, right } => {
                left.validate()?;
                right.validate()?;
                left.domain().ensure_same(right.domain(), "sum domain")?;
                left.codomain().ensure_same(right.codomain(), "sum codomain")
            }
            Op::Compose { outer, inner } => {
                outer.validate()?;
                inner.validate()?;
                outer.domain().ensure_same(inner.codomain(), "composition")
            }
            Op::Adjoint { inner } => inner.validate(),
        }
    }

    /// Applies the operator to `x`.
    pub fn apply(&self, x: &HVector) -> Result<HVector> {
        self.domain().ensure_same(x.space(), "apply")?;
        HVector::new(self.codomain().clone(), self.apply_coords(x.coords()))
    }

    pub(crate) fn apply_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Op::Zero { codomain, .. } => DVector::zeros(codomain.dim()),
            Op::Identity { .. } => x.clone(),
            Op::Scaled { factor, inner } => inner.apply_coords(x) * *factor,
            Op::Dense { matrix, .. } => matrix * x,
            Op::Diagonal { entries, .. } => DVector::from_iterator(x.len(), x.iter().zip(entries).map(|(a, d)| a * d)),
            Op::RightShift { codomain, .. } => {
                let m = codomain.dim();
                DVector::from_fn(m, |i, _| if i >= 1 && i - 1 < x.len() { x[i - 1] } else { 0.0 })
            }
            Op::LeftShift { codomain, .. } => {
                let m = codomain.dim();
                DVector::from_fn(m, |i, _| if i + 1 < x.len() { x[i + 1] } else { 0.0 })
            }
            Op::Filling { codomain, .. } | Op::LeadingProjection { codomain, .. } => {
                let m = codomain.dim();
                DVector::from_fn(m, |i, _| if i < x.len() { x[i] } else { 0.0 })
            }
            Op::GaussianConvolution { .. } => self.to_matrix() * x,
            Op::HeatSemigroup { alpha, tau, space } => {
                let d = heat_multipliers(*alpha, *tau, space);
                DVector::from_iterator(x.len(), x.iter().zip(&d).map(|(a, d)| a * d))
            }
            Op::Sum { left, right } => left.apply_coords(x) + right.apply_coords(x),
            Op::Compose { outer, inner } => outer.apply_coords(&inner.apply_coords(x)),
            Op::Adjoint { inner } => inner.adjoint().apply_coords(x),
        }
    }

    /// Exact adjoint under the discrete inner products of domain and codomain.
    pub fn adjoint(&self) -> OperatorExpr {
        match self {
            Op::Zero { domain, codomain } => Op::Zero {
                domain: codomain.clone(),
                codomain: domain.clone(),
            },
            Op::Identity { .. } | Op::Diagonal { .. } | Op::GaussianConvolution { .. } | Op::HeatSemigroup { .. } => {
                self.clone()
            }
            Op::Scaled { factor, inner } => Op::Scaled {
                factor: *factor,
                inner: Box::new(inner.adjoint()),
            },
            Op::Dense {
                domain,
                codomain,
                matrix,
            } => {
                // <Mx, y>_W2 = <x, W1^{-1} M^T W2 y>_W1
                let mut t = matrix.transpose();
                if !codomain.has_unit_weights() {
                    for (j, w) in codomain.weights().iter().enumerate() {
                        t.column_mut(j).scale_mut(*w);
                    }
                }
                if !domain.has_unit_weights() {
                    for (i, w) in domain.weights().iter().enumerate() {
                        t.row_mut(i).scale_mut(1.0 / w);
                    }
                }
                Op::Dense {
                    domain: codomain.clone(),
                    codomain: domain.clone(),
                    matrix: t,
                }
            }
            Op::RightShift { domain, codomain } => Op::LeftShift {
                domain: codomain.clone(),
                codomain: domain.clone(),
            },
            Op::LeftShift { domain, codomain } => Op::RightShift {
                domain: codomain.clone(),
                codomain: domain.clone(),
            },
            Op::Filling { domain, codomain } => Op::LeadingProjection {
                domain: codomain.clone(),
                codomain: domain.clone(),
            },
            Op::LeadingProjection { domain, codomain } => Op::Filling {
                domain: codomain.clone(),
                codomain: domain.clone(),
            },
            Op::Sum { left, right } => Op::Sum {
                left: Box::new(left.adjoint()),
                right: Box::new(right.adjoint()),
            },
            Op::Compose { outer, inner } => Op::Compose {
                outer: Box::new(inner.adjoint()),
                inner: Box::new(outer.adjoint()),
            },
            Op::Adjoint { inner } => (**inner).clone(),
        }
    }

    /// Coordinate matrix (codomain dim x domain dim).
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let (m, n) = (self.codomain().dim(), self.domain().dim());
        match self {
            Op::Zero { .. } => DMatrix::zeros(m, n),
            Op::Identity { .. } => DMatrix::identity(n, n),
            Op::Scaled { factor, inner } => inner.to_matrix() * *factor,
            Op::Dense { matrix, .. } => matrix.clone(),
            Op::Diagonal { entries, .. } => DMatrix::from_diagonal(&DVector::from_column_slice(entries)),
            Op::RightShift { .. } => DMatrix::from_fn(m, n, |i, j| if i == j + 1 { 1.0 } else { 0.0 }),
            Op::LeftShift { .. } => DMatrix::from_fn(m, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 }),
            Op::Filling { .. } | Op::LeadingProjection { .. } => {
                DMatrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 })
            }
            Op::GaussianConvolution { width, space } => {
                let t = space.grid().expect("validated l2_line");
                let w = space.weights();
                let norm = 1.0 / (width * (2.0 * PI).sqrt());
                DMatrix::from_fn(n, n, |i, j| {
                    let s = (t[i] - t[j]) / width;
                    norm * (-0.5 * s * s).exp() * w[j]
                })
            }
            Op::HeatSemigroup { alpha, tau, space } => {
                DMatrix::from_diagonal(&DVector::from_vec(heat_multipliers(*alpha, *tau, space)))
            }
            Op::Sum { left, right } => left.to_matrix() + right.to_matrix(),
            Op::Compose { outer, inner } => outer.to_matrix() * inner.to_matrix(),
            Op::Adjoint { inner } => inner.adjoint().to_matrix(),
        }
    }

    /// Matrix in orthonormal coordinates: `W_cod^{1/2} M W_dom^{-1/2}`.
    /// In this frame the adjoint is the plain transpose.
    pub fn ortho_matrix(&self) -> DMatrix<f64> {
        let mut m = self.to_matrix();
        let (dom, cod) = (self.domain(), self.codomain());
        if !cod.has_unit_weights() {
            for (i, w) in cod.weights().iter().enumerate() {
                m.row_mut(i).scale_mut(w.sqrt());
            }
        }
        if !dom.has_unit_weights() {
            for (j, w) in dom.weights().iter().enumerate() {
                m.column_mut(j).scale_mut(1.0 / w.sqrt());
            }
        }
        m
    }

    /// Operator norm on the truncation (largest singular value in the orthonormal frame).
    pub fn norm(&self) -> f64 {
        crate::linalg::spectral_norm(&self.ortho_matrix())
    }

    pub fn is_square(&self) -> bool {
        self.domain().same_as(self.codomain())
    }
}

/// Sine-mode multipliers `exp(-alpha tau (n pi / l)^2)`, `n = 1..modes`.
pub(crate) fn heat_multipliers(alpha: f64, tau: f64, space: &Space) -> Vec<f64> {
    let Space::L2Interval { length, modes } = *space else {
        return vec![1.0; space.dim()];
    };
    (1..=modes)
        .map(|n| {
            let kn = n as f64 * PI / length;
            (-alpha * tau * kn * kn).exp()
        })
        .collect()
}
