//! Reference models used throughout the tests and examples.

use crate::grid::{Grid, GridFunction};
use crate::model::{ModelParams, RevenueSpec, DEFAULT_BETA_FLOOR};

/// `mu = lambda = s_bar = 1`, `alpha = 1`, `beta0 = beta1 = 1/2`, `q = 0`,
/// `R(Q) = -Q^2/2 + Q`.
pub fn model_a(n_cells: usize) -> ModelParams {
    let grid = Grid::new(1.0, n_cells).expect("n_cells >= 2");
    ModelParams {
        mu: 1.0,
        lambda: 1.0,
        s_bar: 1.0,
        alpha: GridFunction::constant(grid, 1.0),
        beta0: 0.5,
        beta1: GridFunction::constant(grid, 0.5),
        q0: 0.0,
        q1: GridFunction::zeros(grid),
        revenue: RevenueSpec::quadratic(0.5, 1.0),
        beta_floor: DEFAULT_BETA_FLOOR,
    }
}

/// As [`model_a`] with `alpha(s) = 1 - s`, which vanishes at `s_bar`.
pub fn model_b(n_cells: usize) -> ModelParams {
    let mut p = model_a(n_cells);
    p.alpha = GridFunction::from_fn(p.grid(), |s| 1.0 - s);
    p
}
