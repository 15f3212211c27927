//! Periodic grid over the torus [0,L)^n and the height field living on it.
//!
//! The ambient model is the upper half-space: a point of the hypersurface is
//! (x, y(x)) with x on the torus and y > 0 the height above the ideal boundary.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

/// Uniform periodic grid, identical extent and resolution along every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    points_per_axis: usize,
    length: f64,
}

impl Grid {
    pub fn new(dim: usize, points_per_axis: usize, length: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if !(1..=MAX_DIM).contains(&dim) {
            problems.push(format!("dimension must be 1 or 2, got {dim}"));
        }
        if points_per_axis < 8 {
            problems.push(format!("points_per_axis must be >= 8, got {points_per_axis}"));
        }
        if !(length > 0.0 && length.is_finite()) {
            problems.push(format!("length must be positive and finite, got {length}"));
        }
        if let Some(reason) = problems.into_iter().next() {
            return Err(Error::InvalidGrid { reason });
        }
        Ok(Self {
            dim,
            points_per_axis,
            length,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points_per_axis as f64
    }

    /// Total number of grid points, N^dim.
    pub fn num_points(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Flat index of the multi-index (i, j); j is ignored for dim 1.
    /// Row-major: axis 0 is the slow index.
    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        match self.dim {
            1 => i,
            _ => i * self.points_per_axis + j,
        }
    }

    /// Inverse of `flat`; returns (i, j) with j = 0 for dim 1.
    #[inline]
    pub fn multi(&self, flat: usize) -> (usize, usize) {
        match self.dim {
            1 => (flat, 0),
            _ => (flat / self.points_per_axis, flat % self.points_per_axis),
        }
    }

    /// Periodic wrap of a signed axis index into [0, N).
    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        let n = self.points_per_axis as isize;
        i.rem_euclid(n) as usize
    }

    /// Coordinate of axis index i along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Grid scaled by lambda: heights y -> lambda y together with
    /// length -> lambda L is the ambient isometry used by the scaling tests.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Grid::new(self.dim, self.points_per_axis, self.length * lambda)
    }
}

/// Height field y(x) > 0 on a grid at a fixed flow time.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub grid: Grid,
    pub t: f64,
    y: Vec<f64>,
}

impl GraphState {
    /// Validates length, finiteness and positivity of the heights.
    pub fn new(grid: Grid, t: f64, y: Vec<f64>) -> Result<Self> {
        if y.len() != grid.num_points() {
            return Err(Error::InvalidGrid {
                reason: format!(
                    "height field has {} values, grid has {} points",
                    y.len(),
                    grid.num_points()
                ),
            });
        }
        if !t.is_finite() {
            return Err(Error::InvalidGrid {
                reason: format!("time must be finite, got {t}"),
            });
        }
        for (index, &value) in y.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveHeight { index, value });
            }
        }
        Ok(Self { grid, t, y })
    }

    /// Builds from a function of the point coordinates.
    pub fn from_fn(grid: Grid, t: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = grid.points_per_axis();
        let mut y = Vec::with_capacity(grid.num_points());
        if grid.dim() == 1 {
            for i in 0..n {
                y.push(f(grid.coord(i), 0.0));
            }
        } else {
            for i in 0..n {
                for j in 0..n {
                    y.push(f(grid.coord(i), grid.coord(j)));
                }
            }
        }
        GraphState::new(grid, t, y)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.y[self.grid.flat(i, j)]
    }

    pub fn y_inf(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn y_sup(&self) -> f64 {
        self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same heights scaled by lambda on the lambda-scaled grid. An ambient
    /// isometry of the half-space model: curvatures are unchanged, w scales
    /// by 1/lambda.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let grid = self.grid.scaled(lambda)?;
        let y = self.y.iter().map(|v| v * lambda).collect();
        GraphState::new(grid, self.t, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::new(0, 16, 1.0).is_err());
        assert!(Grid::new(3, 16, 1.0).is_err());
        assert!(Grid::new(1, 7, 1.0).is_err());
        assert!(Grid::new(1, 16, 0.0).is_err());
        assert!(Grid::new(1, 16, f64::INFINITY).is_err());
        assert!(Grid::new(2, 8, 2.5).is_ok());
    }

    #[test]
    fn wrap_is_periodic_both_directions() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        assert_eq!(g.wrap(-1), 7);
        assert_eq!(g.wrap(8), 0);
        assert_eq!(g.wrap(17), 1);
        assert_eq!(g.wrap(-9), 7);
    }

    #[test]
    fn flat_and_multi_roundtrip() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        for f in 0..g.num_points() {
            let (i, j) = g.multi(f);
            assert_eq!(g.flat(i, j), f);
        }
    }

    #[test]
    fn state_rejects_nonpositive_height() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let mut y = vec![1.0; 8];
        y[3] = 0.0;
        match GraphState::new(g, 0.0, y) {
            Err(Error::NonPositiveHeight { index: 3, .. }) => {}
            other => panic!("expected NonPositiveHeight at 3, got {other:?}"),
        }
    }

    #[test]
    fn state_rejects_wrong_length_and_nonfinite() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        assert!(GraphState::new(g, 0.0, vec![1.0; 7]).is_err());
        assert!(GraphState::new(g, f64::NAN, vec![1.0; 8]).is_err());
        let mut y = vec![1.0; 8];
        y[0] = f64::NAN;
        assert!(GraphState::new(g, 0.0, y).is_err());
    }

    #[test]
    fn scaling_scales_heights_exactly() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let s = GraphState::from_fn(g, 0.0, |x, _| 1.0 + 0.25 * (x - 0.3).abs()).unwrap();
        let s2 = s.scaled(2.0).unwrap();
        assert_eq!(s2.grid.length(), 2.0);
        for (a, b) in s.y().iter().zip(s2.y()) {
            assert_eq!(*b, 2.0 * *a);
        }
    }
}
