use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// A strategy pair: `u` for the min player, `v` for the max player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPoint {
    pub u: Vector,
    pub v: Vector,
}

impl JointPoint {
    pub fn new(u: Vector, v: Vector) -> Self {
        Self { u, v }
    }

    pub fn from_slices(u: &[f64], v: &[f64]) -> Self {
        Self::new(Vector::from_column_slice(u), Vector::from_column_slice(v))
    }

    /// 1-D/1-D point `(x, y)`.
    pub fn scalar(x: f64, y: f64) -> Self {
        Self::from_slices(&[x], &[y])
    }

    pub fn zeros(dim_u: usize, dim_v: usize) -> Self {
        Self::new(Vector::zeros(dim_u), Vector::zeros(dim_v))
    }

    pub fn dim_u(&self) -> usize {
        self.u.len()
    }

    pub fn dim_v(&self) -> usize {
        self.v.len()
    }

    pub fn dim(&self) -> usize {
        self.u.len() + self.v.len()
    }

    /// `(u, v)` stacked into one vector.
    pub fn flatten(&self) -> Vector {
        let mut out = Vector::zeros(self.dim());
        out.rows_mut(0, self.u.len()).copy_from(&self.u);
        out.rows_mut(self.u.len(), self.v.len()).copy_from(&self.v);
        out
    }

    pub fn from_flat(flat: &Vector, dim_u: usize) -> Self {
        let dim_v = flat.len() - dim_u;
        Self::new(flat.rows(0, dim_u).into_owned(), flat.rows(dim_u, dim_v).into_owned())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.u.iter().chain(self.v.iter()).copied().collect()
    }

    pub fn norm(&self) -> f64 {
        (self.u.norm_squared() + self.v.norm_squared()).sqrt()
    }

    pub fn distance(&self, other: &JointPoint) -> f64 {
        ((&self.u - &other.u).norm_squared() + (&self.v - &other.v).norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Axis-aligned box over the joint coordinates `(u, v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidParameter(format!(
                "box bounds must satisfy lower < upper, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn contains_point(&self, p: &JointPoint) -> bool {
        self.contains(&p.flatten())
    }

    /// Euclidean projection, which for a box is the per-coordinate clamp.
    pub fn project(&self, x: &mut Vector) {
        for (x, (l, h)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*l, *h);
        }
    }

    pub fn project_point(&self, p: &JointPoint) -> JointPoint {
        let mut flat = p.flatten();
        self.project(&mut flat);
        JointPoint::from_flat(&flat, p.dim_u())
    }

    /// Clamp only the `u` coordinates (the first `u.len()` box axes).
    pub fn project_u(&self, u: &mut Vector) {
        for (i, x) in u.iter_mut().enumerate() {
            *x = x.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Clamp only the `v` coordinates (the box axes after `dim_u`).
    pub fn project_v(&self, v: &mut Vector, dim_u: usize) {
        for (i, x) in v.iter_mut().enumerate() {
            *x = x.clamp(self.lower[dim_u + i], self.upper[dim_u + i]);
        }
    }

    pub fn diameter(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let p = JointPoint::from_slices(&[1.0, 2.0], &[3.0]);
        let flat = p.flatten();
        assert_eq!(flat.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(JointPoint::from_flat(&flat, 2), p);
    }

    #[test]
    fn box_projection_is_clamp() {
        let b = BoxDomain::cube(-1.0, 1.0, 2).unwrap();
        let p = b.project_point(&JointPoint::scalar(3.0, -0.5));
        assert_eq!(p, JointPoint::scalar(1.0, -0.5));
        assert!((b.diameter() - 8f64.sqrt()).abs() < 1e-15);
        assert!(BoxDomain::new(vec![1.0], vec![1.0]).is_err());
    }
}
