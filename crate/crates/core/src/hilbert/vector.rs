use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Space;
use crate::error::{Error, Result};

/// Coordinates of a Hilbert-space element in the basis declared by its space.
#[derive(Debug, Clone, PartialEq)]
pub struct HVector {
    space: Space,
    coords: DVector<f64>,
}

impl HVector {
    pub fn new(space: Space, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != space.dim() {
            return Err(Error::dim(format!(
                "vector has {} coordinates, space has dimension {}",
                coords.len(),
                space.dim()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parse("vector has non-finite coordinates".into()));
        }
        Ok(HVector { space, coords })
    }

    pub fn from_vec(space: Space, coords: Vec<f64>) -> Result<Self> {
        Self::new(space, DVector::from_vec(coords))
    }

    pub fn zeros(space: Space) -> Self {
        let n = space.dim();
        HVector {
            space,
            coords: DVector::zeros(n),
        }
    }

    /// Samples `f` at the grid nodes of an `L2Line` space.
    pub fn sample(space: Space, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = space
            .grid()
            .ok_or_else(|| Error::dim("sampling needs an l2_line space"))?;
        let coords = grid.into_iter().map(f).collect();
        Self::from_vec(space, coords)
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    /// Coordinates in an orthonormal frame: `sqrt(w_i) x_i`.
    pub fn ortho_coords(&self) -> DVector<f64> {
        if self.space.has_unit_weights() {
            return self.coords.clone();
        }
        let w = self.space.weights();
        DVector::from_iterator(self.coords.len(), self.coords.iter().zip(&w).map(|(x, w)| x * w.sqrt()))
    }

    pub fn from_ortho(space: Space, ortho: DVector<f64>) -> Result<Self> {
        if space.has_unit_weights() {
            return Self::new(space, ortho);
        }
        let w = space.weights();
        let coords = DVector::from_iterator(ortho.len(), ortho.iter().zip(&w).map(|(x, w)| x / w.sqrt()));
        Self::new(space, coords)
    }

    pub fn norm(&self) -> f64 {
        inner(self, self).map(f64::sqrt).unwrap_or(f64::NAN)
    }

    pub fn scaled(&self, a: f64) -> Self {
        HVector {
            space: self.space.clone(),
            coords: &self.coords * a,
        }
    }

    pub fn add(&self, other: &HVector) -> Result<Self> {
        self.space.ensure_same(&other.space, "vector sum")?;
        Ok(HVector {
            space: self.space.clone(),
            coords: &self.coords + &other.coords,
        })
    }

    /// Norm of the coordinates past the first `keep`, used for truncation warnings.
    pub fn tail_norm(&self, keep: usize) -> f64 {
        let w = self.space.weights();
        self.coords
            .iter()
            .zip(&w)
            .skip(keep)
            .map(|(x, w)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Inner product of two elements of the same space (quadrature-weighted on L2 grids).
pub fn inner(x: &HVector, y: &HVector) -> Result<f64> {
    x.space.ensure_same(&y.space, "inner product")?;
    if x.space.has_unit_weights() {
        return Ok(x.coords.dot(&y.coords));
    }
    let w = x.space.weights();
    Ok(x.coords
        .iter()
        .zip(y.coords.iter())
        .zip(&w)
        .map(|((a, b), w)| w * a * b)
        .sum())
}

#[derive(Serialize, Deserialize)]
struct HVectorRepr {
    space: Space,
    coords: Vec<f64>,
}

impl Serialize for HVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HVectorRepr {
            space: self.space.clone(),
            coords: self.coords.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = HVectorRepr::deserialize(d)?;
        r.space.validate().map_err(serde::de::Error::custom)?;
        HVector::from_vec(r.space, r.coords).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn zero_vector_has_zero_norm() {
        let x = HVector::zeros(Space::ell2(5));
        assert_eq!(inner(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn geometric_sequence_norm_tends_to_two() {
        let n = 64;
        let x = HVector::from_vec(Space::ell2(n), (0..n).map(|k| FRAC_1_SQRT_2.powi(k as i32)).collect()).unwrap();
        // sum_{k<n} 2^{-k} = 2 - 2^{1-n}
        let exact = 2.0 - 2f64.powi(1 - n as i32);
        assert!((inner(&x, &x).unwrap() - exact).abs() < 1e-14);
        assert!((x.norm().powi(2) - 2.0).abs() < 1e-15 * 1e3);
    }

    #[test]
    fn sine_on_unit_interval_via_line_quadrature() {
        // Trapezoid rule on the line grid restricted to [0, 1] by the integrand support.
        let space = Space::l2_line(1.0, 1e-3);
        let f = HVector::sample(space, |t| if t >= 0.0 { (PI * t).sin() } else { 0.0 }).unwrap();
        assert!((inner(&f, &f).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn mismatched_spaces_error() {
        let a = HVector::zeros(Space::ell2(3));
        let b = HVector::zeros(Space::euclidean(3));
        assert!(matches!(inner(&a, &b), Err(Error::Dimension(_))));
        assert!(HVector::from_vec(Space::ell2(2), vec![1.0]).is_err());
    }

    #[test]
    fn ortho_round_trip() {
        let s = Space::l2_line(1.0, 0.25);
        let x = HVector::sample(s.clone(), |t| t * t + 1.0).unwrap();
        let o = x.ortho_coords();
        assert!((o.dot(&o) - inner(&x, &x).unwrap()).abs() < 1e-14);
        let back = HVector::from_ortho(s, o).unwrap();
        assert!((back.coords() - x.coords()).norm() < 1e-14);
    }
}
