use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A truncated separable Hilbert space together with the coordinates used
/// to represent its elements.
///
/// `Ell2` and `Euclidean` use the standard basis, `L2Interval` uses the
/// orthonormal Dirichlet sine modes `sqrt(2/l) sin(n pi x / l)` and
/// `L2Line` uses point samples on a uniform grid over `[-T, T]` with
/// trapezoid quadrature weights. Only `L2Line` has non-unit weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Space {
    Ell2 { dim: usize },
    Euclidean { dim: usize },
    L2Line { half_width: f64, spacing: f64 },
    L2Interval { length: f64, modes: usize },
}

impl Space {
    pub fn ell2(dim: usize) -> Self {
        Space::Ell2 { dim }
    }

    pub fn euclidean(dim: usize) -> Self {
        Space::Euclidean { dim }
    }

    pub fn l2_line(half_width: f64, spacing: f64) -> Self {
        Space::L2Line { half_width, spacing }
    }

    pub fn l2_interval(length: f64, modes: usize) -> Self {
        Space::L2Interval { length, modes }
    }

    /// Checks the descriptor invariants (positive dimension, positive grid data).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Space::Ell2 { dim } | Space::Euclidean { dim } if dim == 0 => {
                Err(Error::Parse("space dimension must be >= 1".into()))
            }
            Space::L2Interval { length, modes } if modes == 0 || !(length > 0.0) => Err(Error::Parse(
                "l2_interval needs length > 0 and at least one mode".into(),
            )),
            Space::L2Line { half_width, spacing } => {
                if !(half_width > 0.0) || !(spacing > 0.0) {
                    return Err(Error::Parse("l2_line needs positive half_width and spacing".into()));
                }
                let cells = 2.0 * half_width / spacing;
                if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
                    return Err(Error::Parse(format!(
                        "l2_line spacing {spacing} does not divide [-{half_width}, {half_width}]"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Space::Ell2 { dim } | Space::Euclidean { dim } => dim,
            Space::L2Interval { modes, .. } => modes,
            Space::L2Line { half_width, spacing } => (2.0 * half_width / spacing).round() as usize + 1,
        }
    }

    /// True when the coordinate inner product is the plain dot product.
    pub fn has_unit_weights(&self) -> bool {
        !matches!(self, Space::L2Line { .. })
    }

    /// Quadrature weights of the discrete inner product `sum_i w_i x_i y_i`.
    pub fn weights(&self) -> Vec<f64> {
        match *self {
            Space::L2Line { spacing, .. } => {
                let n = self.dim();
                let mut w = vec![spacing; n];
                if n > 1 {
                    w[0] = 0.5 * spacing;
                    w[n - 1] = 0.5 * spacing;
                }
                w
            }
            _ => vec![1.0; self.dim()],
        }
    }

    /// Grid nodes of an `L2Line` space; `None` for the others.
    pub fn grid(&self) -> Option<Vec<f64>> {
        match *self {
            Space::L2Line { half_width, spacing } => {
                Some((0..self.dim()).map(|i| -half_width + i as f64 * spacing).collect())
            }
            _ => None,
        }
    }

    pub(crate) fn same_as(&self, other: &Space) -> bool {
        match (self, other) {
            (
                Space::L2Line {
                    half_width: a,
                    spacing: b,
                },
                Space::L2Line {
                    half_width: c,
                    spacing: d,
                },
            ) => (a - c).abs() <= 1e-12 * a.abs().max(1.0) && (b - d).abs() <= 1e-12 * b.abs(),
            (Space::L2Interval { length: a, modes: m }, Space::L2Interval { length: c, modes: n }) => {
                m == n && (a - c).abs() <= 1e-12 * a.abs()
            }
            _ => self == other,
        }
    }

    pub(crate) fn ensure_same(&self, other: &Space, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::dim(format!("{what}: {self:?} vs {other:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_grid_has_trapezoid_weights() {
        let s = Space::l2_line(1.0, 0.5);
        assert_eq!(s.dim(), 5);
        assert_eq!(s.weights(), vec![0.25, 0.5, 0.5, 0.5, 0.25]);
        assert_eq!(s.grid().unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn invalid_descriptors_are_rejected() {
        assert!(Space::ell2(0).validate().is_err());
        assert!(Space::l2_line(1.0, 0.3).validate().is_err());
        assert!(Space::l2_interval(0.0, 4).validate().is_err());
    }

    #[test]
    fn serde_tags() {
        let s: Space = serde_json::from_str(r#"{"kind":"l2_interval","length":1.0,"modes":8}"#).unwrap();
        assert_eq!(s, Space::l2_interval(1.0, 8));
        assert_eq!(
            serde_json::to_string(&Space::ell2(3)).unwrap(),
            r#"{"kind":"ell2","dim":3}"#
        );
    }
}
