//! Observation windows and point patterns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::RandomStream;

/// Axis-aligned box `[l_1, u_1] x ... x [l_d, u_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidParameter(format!(
                "window bounds need matching nonzero dimension, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !l.is_finite() || !u.is_finite() || l >= u {
                return Err(Error::InvalidParameter(format!(
                    "window sides must be finite nondegenerate intervals, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit_square() -> Self {
        Self {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        }
    }

    /// Cube `[0, side]^dim`.
    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![side; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.side(a)).product()
    }

    /// Expands every side by `r` in both directions.
    pub fn dilate(&self, r: f64) -> Self {
        assert!(r.is_finite() && r >= 0.0, "dilation radius must be >= 0");
        Self {
            lower: self.lower.iter().map(|l| l - r).collect(),
            upper: self.upper.iter().map(|u| u + r).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Distance from `x` to the boundary; negative when `x` lies outside.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l).min(u - v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sample_uniform(&self, stream: &mut RandomStream, out: &mut [f64]) {
        for (axis, slot) in out.iter_mut().enumerate() {
            *slot = stream.uniform_in(self.lower[axis], self.upper[axis]);
        }
    }
}

/// A finite point configuration with interleaved coordinate storage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointPattern {
    dim: usize,
    coords: Vec<f64>,
}

impl PointPattern {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "point pattern dimension must be positive");
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, points: usize) -> Self {
        assert!(dim > 0, "point pattern dimension must be positive");
        Self {
            dim,
            coords: Vec::with_capacity(dim * points),
        }
    }

    /// Builds a pattern from interleaved coordinates, rejecting non-finite
    /// values and length mismatches.
    pub fn from_coords(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "coordinate buffer of length {} is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "point coordinates must be finite".into(),
            ));
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.coords.extend_from_slice(x);
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn extend_from(&mut self, other: &PointPattern) {
        assert_eq!(self.dim, other.dim, "pattern dimensions differ");
        self.coords.extend_from_slice(&other.coords);
    }

    pub fn clip(&self, window: &Window) -> PointPattern {
        assert_eq!(self.dim, window.dim(), "pattern and window dimensions differ");
        let mut out = PointPattern::new(self.dim);
        for p in self.iter() {
            if window.contains(p) {
                out.push(p);
            }
        }
        out
    }

    pub fn translate(&self, shift: &[f64]) -> PointPattern {
        assert_eq!(shift.len(), self.dim);
        let mut out = self.clone();
        for p in out.coords.chunks_exact_mut(self.dim) {
            for (v, s) in p.iter_mut().zip(shift) {
                *v += s;
            }
        }
        out
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_rejects_degenerate_bounds() {
        assert!(Window::new(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
        assert!(Window::new(vec![0.0], vec![f64::NAN]).is_err());
        assert!(Window::new(vec![], vec![]).is_err());
    }

    #[test]
    fn dilation_grows_every_side() {
        let w = Window::unit_square().dilate(0.5);
        assert_eq!(w.lower(), &[-0.5, -0.5]);
        assert_eq!(w.upper(), &[1.5, 1.5]);
        assert!((w.volume() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pattern_round_trip_and_clip() {
        let p = PointPattern::from_coords(2, vec![0.2, 0.3, 1.4, 0.5, 0.9, 0.9]).unwrap();
        assert_eq!(p.len(), 3);
        let clipped = p.clip(&Window::unit_square());
        assert_eq!(clipped.len(), 2);
        assert_eq!(clipped.point(1), &[0.9, 0.9]);
    }

    #[test]
    fn pattern_rejects_bad_coordinates() {
        assert!(PointPattern::from_coords(2, vec![0.0, 1.0, 2.0]).is_err());
        assert!(PointPattern::from_coords(2, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn boundary_distance_sign() {
        let w = Window::unit_square();
        assert!((w.boundary_distance(&[0.25, 0.5]) - 0.25).abs() < 1e-15);
        assert!(w.boundary_distance(&[-0.1, 0.5]) < 0.0);
    }
}
