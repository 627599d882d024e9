//! Uniform age grids and node-sampled functions on `[0, s_bar]`.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Uniform grid `s_j = j * h`, `h = s_bar / n_cells`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub s_bar: f64,
    pub n_cells: usize,
}

#[allow(clippy::len_without_is_empty)] // a grid always has at least three nodes
impl Grid {
    pub fn new(s_bar: f64, n_cells: usize) -> Result<Self, Error> {
        if !(s_bar.is_finite() && s_bar > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "s_bar must be finite and > 0, got {s_bar}"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidGrid(format!(
                "n_cells must be >= 2, got {n_cells}"
            )));
        }
        Ok(Self { s_bar, n_cells })
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.s_bar / self.n_cells as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        if j == self.n_cells {
            self.s_bar
        } else {
            j as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| self.node(j))
    }

    /// Trapezoid weights; they sum to `s_bar`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.len()];
        w[0] = 0.5 * h;
        w[self.n_cells] = 0.5 * h;
        w
    }
}

/// A real function of age sampled at the `n_cells + 1` nodes of a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at node {j}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    /// Builds from raw values without the finiteness check. Internal kernels
    /// only produce finite values from finite inputs.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    #[inline]
    pub fn s_bar(&self) -> f64 {
        self.grid.s_bar
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.grid.n_cells
    }

    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.grid.n_cells]
    }

    /// Linear interpolation between nodes; zero outside `[0, s_bar]`.
    pub fn value_at(&self, s: f64) -> f64 {
        let s_bar = self.grid.s_bar;
        let eps = 1e-12 * s_bar;
        if s < -eps || s > s_bar + eps {
            return 0.0;
        }
        let x = (s / self.grid.h()).clamp(0.0, self.grid.n_cells as f64);
        let j = (x.floor() as usize).min(self.grid.n_cells - 1);
        let t = x - j as f64;
        if t == 0.0 {
            return self.values[j];
        }
        (1.0 - t) * self.values[j] + t * self.values[j + 1]
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.grid == other.grid
    }

    pub fn check_same_grid(&self, other: &GridFunction, what: &str) -> Result<(), Error> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(what.to_string()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Node-wise combination of two functions on the same grid.
    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction, Error> {
        self.check_same_grid(other, "zip_with")?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Result<GridFunction, Error> {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction, Error> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L² norm with trapezoid weights.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        self.values
            .iter()
            .zip(&w)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Resamples onto another grid by linear interpolation.
    pub fn resample(&self, grid: Grid) -> GridFunction {
        GridFunction::from_fn(grid, |s| self.value_at(s.min(self.grid.s_bar)))
    }
}
