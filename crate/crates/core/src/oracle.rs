//! Dense-matrix oracle.
//!
//! Every kernel is assembled here from its integral definition with
//! Gauss-Legendre quadrature against the nodal hat functions, sharing no code
//! with [`crate::operators`]. The equilibrium is then found by plain Picard
//! iteration of the closed-loop map `T x = R'(<alpha, x>) w1 + w2`, which
//! makes the observed step ratio an estimate of the contraction constant.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::Error;
use crate::grid::{Grid, GridFunction};
use crate::model::ModelParams;
use crate::operators::ControlPair;

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Number of trailing step norms used for the rate fit.
const RATE_WINDOW: usize = 10;
pub const WEAK_FORM_TESTS: usize = 16;

/// 8-point Gauss-Legendre rule on `[a, b]`.
fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(&x, w)| w * (f(mid - half * x) + f(mid + half * x)))
        .sum::<f64>()
        * half
}

/// Matrices and resampled model data on one grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub grid: Grid,
    /// `A^{-1}`, lower triangular.
    pub a_inverse: DMatrix<f64>,
    /// `(A0*)^{-1}`, upper triangular.
    pub adjoint_inverse: DMatrix<f64>,
    /// `(lambda - A0*)^{-1}`, upper triangular.
    pub resolvent: DMatrix<f64>,
    /// Trapezoid weights.
    pub weights: DVector<f64>,
    /// `A^{-1} delta_0` at the nodes, `-e^{-mu s_j}`.
    pub delta: DVector<f64>,
    alpha: DVector<f64>,
    beta1: DVector<f64>,
    q1: DVector<f64>,
}

/// `[j][m] = int_0^{s_j} e^{-k (s_j - sigma)} hat_m(sigma) d sigma`.
fn forward_kernel(grid: Grid, k: f64) -> DMatrix<f64> {
    let n = grid.n_cells;
    let h = grid.h();
    // Hat pieces relative to their own node at 0.
    let left = gauss_legendre(-h, 0.0, |t| (-k * -t).exp() * (t + h) / h);
    let right = gauss_legendre(0.0, h, |t| (k * t).exp() * (h - t) / h);
    DMatrix::from_fn(n + 1, n + 1, |j, m| {
        if m > j {
            return 0.0;
        }
        let mut v = 0.0;
        if m >= 1 {
            v += left;
        }
        if m < j {
            v += right;
        }
        v * (-k * (j - m) as f64 * h).exp()
    })
}

/// `[j][m] = int_{s_j}^{s_bar} e^{-k (sigma - s_j)} hat_m(sigma) d sigma`.
fn backward_kernel(grid: Grid, k: f64) -> DMatrix<f64> {
    let n = grid.n_cells;
    let h = grid.h();
    let left = gauss_legendre(-h, 0.0, |t| (-k * t).exp() * (t + h) / h);
    let right = gauss_legendre(0.0, h, |t| (-k * t).exp() * (h - t) / h);
    DMatrix::from_fn(n + 1, n + 1, |j, m| {
        if m < j {
            return 0.0;
        }
        let mut v = 0.0;
        if m > j {
            v += left;
        }
        if m < n {
            v += right;
        }
        v * (-k * (m - j) as f64 * h).exp()
    })
}

fn to_vector(f: &GridFunction, grid: Grid) -> DVector<f64> {
    let g = if f.grid() == grid {
        f.clone()
    } else {
        f.resample(grid)
    };
    DVector::from_column_slice(g.values())
}

fn to_grid_function(grid: Grid, v: &DVector<f64>) -> GridFunction {
    GridFunction::new(grid, v.as_slice().to_vec()).expect("finite oracle output")
}

/// Builds the oracle on an `n_cells`-cell grid over the model's age range.
pub fn build(params: &ModelParams, n_cells: usize) -> Result<DiscreteOperators, Error> {
    if n_cells < 8 {
        return Err(Error::InvalidArgument(format!(
            "oracle needs n >= 8, got {n_cells}"
        )));
    }
    let grid = Grid::new(params.s_bar, n_cells)?;
    let h = grid.h();
    let mut weights = DVector::from_element(n_cells + 1, h);
    weights[0] = 0.5 * h;
    weights[n_cells] = 0.5 * h;
    let delta = DVector::from_fn(n_cells + 1, |j, _| -(-params.mu * j as f64 * h).exp());
    Ok(DiscreteOperators {
        grid,
        a_inverse: -forward_kernel(grid, params.mu),
        adjoint_inverse: -backward_kernel(grid, params.mu),
        resolvent: backward_kernel(grid, params.mu + params.lambda),
        weights,
        delta,
        alpha: to_vector(&params.alpha, grid),
        beta1: to_vector(&params.beta1, grid),
        q1: to_vector(&params.q1, grid),
    })
}

impl DiscreteOperators {
    fn pairing(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .zip(self.weights.iter())
            .map(|((x, y), w)| w * x * y)
            .sum()
    }

    fn l2(&self, v: &DVector<f64>) -> f64 {
        self.pairing(v, v).sqrt()
    }

    pub fn alpha(&self) -> GridFunction {
        to_grid_function(self.grid, &self.alpha)
    }

    /// `(w1, w2)` of the reduced map, from the matrices.
    pub fn profile_basis(&self, params: &ModelParams) -> (DVector<f64>, DVector<f64>) {
        let alpha_bar = &self.resolvent * &self.alpha;
        let scaled = alpha_bar.zip_map(&self.beta1, |a, b| a / (2.0 * b));
        let w1 =
            -(&self.a_inverse * scaled) - self.delta.scale(alpha_bar[0] / (2.0 * params.beta0));
        let q_scaled = self.q1.zip_map(&self.beta1, |q, b| q / (2.0 * b));
        let w2 = &self.a_inverse * q_scaled + self.delta.scale(params.q0 / (2.0 * params.beta0));
        (w1, w2)
    }

    /// `<alpha, x>` with the oracle's weights.
    pub fn output(&self, x: &GridFunction) -> f64 {
        self.pairing(&self.alpha, &to_vector(x, self.grid))
    }

    /// Weak-form defect of `A x + B u = 0` against `phi_i(s) = r^i (1 - r)`,
    /// `r = s / s_bar`, `i < 16`:
    /// `max_i |<x, phi_i' - mu phi_i> + <u1, phi_i> + u0 phi_i(0)|`.
    pub fn residual_weak_form(
        &self,
        x: &GridFunction,
        u: &ControlPair,
        params: &ModelParams,
    ) -> f64 {
        let xv = to_vector(x, self.grid);
        let u1 = to_vector(&u.u1, self.grid);
        let s_bar = self.grid.s_bar;
        let mut worst: f64 = 0.0;
        for i in 0..WEAK_FORM_TESTS {
            let mut acc = 0.0;
            for j in 0..self.grid.len() {
                let r = self.grid.node(j) / s_bar;
                let phi = r.powi(i as i32) * (1.0 - r);
                let dphi = if i == 0 {
                    -1.0 / s_bar
                } else {
                    (i as f64 * r.powi(i as i32 - 1) * (1.0 - r) - r.powi(i as i32)) / s_bar
                };
                acc += self.weights[j] * (xv[j] * (dphi - params.mu * phi) + u1[j] * phi);
            }
            let phi0 = if i == 0 { 1.0 } else { 0.0 };
            acc += u.u0 * phi0;
            worst = worst.max(acc.abs());
        }
        worst
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardOutcome {
    pub x: GridFunction,
    /// Iterates produced before the fixed point was reached (steps above `tol`).
    pub iterations: usize,
    /// Geometric fit of the trailing step norms; 0 when the map is constant.
    pub fitted_rate: f64,
    pub converged: bool,
    pub step_norms: Vec<f64>,
}

/// Least-squares slope of `ln(step)` against the step index, exponentiated.
fn fit_rate(steps: &[f64], scale: f64) -> f64 {
    let floor = 1e-14 * (1.0 + scale);
    let usable: Vec<f64> = steps.iter().copied().filter(|&s| s > floor).collect();
    if usable.len() < 2 {
        return 0.0;
    }
    let tail = &usable[usable.len().saturating_sub(RATE_WINDOW)..];
    let m = tail.len() as f64;
    let mean_i = (m - 1.0) / 2.0;
    let mean_y = tail.iter().map(|s| s.ln()).sum::<f64>() / m;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, s) in tail.iter().enumerate() {
        let di = i as f64 - mean_i;
        num += di * (s.ln() - mean_y);
        den += di * di;
    }
    (num / den).exp()
}

/// Picard iteration `x_{k+1} = T x_k` until the discrete `L^2` step is `<= tol`.
pub fn picard_fixed_point(
    ops: &DiscreteOperators,
    params: &ModelParams,
    x0: &GridFunction,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome, Error> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    let (w1, w2) = ops.profile_basis(params);
    let mut x = to_vector(x0, ops.grid);
    let mut steps = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let slope = params.revenue.prime(ops.pairing(&ops.alpha, &x));
        let next = &w2 + w1.scale(slope);
        let step = ops.l2(&(&next - &x));
        x = next;
        steps.push(step);
        if !step.is_finite() {
            break;
        }
        if step <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        let tail = &steps[steps.len().saturating_sub(RATE_WINDOW)..];
        let monotone = tail.windows(2).all(|w| w[1] <= w[0]) && tail.iter().all(|s| s.is_finite());
        if !monotone {
            return Err(Error::NoConvergence {
                iterations: steps.len(),
                last_steps: tail.to_vec(),
            });
        }
    }
    let scale = ops.l2(&x);
    Ok(PicardOutcome {
        x: to_grid_function(ops.grid, &x),
        iterations: steps.iter().filter(|&&s| s > tol).count(),
        fitted_rate: fit_rate(&steps, scale),
        converged,
        step_norms: steps,
    })
}

/// Operator norm of `matrix` on the trapezoid-weighted `L^2` space, by power
/// iteration on `C^T C` with `C = W^{1/2} M W^{-1/2}`.
pub fn weighted_operator_norm(matrix: &DMatrix<f64>, weights: &DVector<f64>) -> f64 {
    let sqrt_w = weights.map(f64::sqrt);
    let c = DMatrix::from_fn(matrix.nrows(), matrix.ncols(), |i, j| {
        sqrt_w[i] * matrix[(i, j)] / sqrt_w[j]
    });
    let ct = c.transpose();
    let mut v = DVector::from_fn(matrix.ncols(), |j, _| 1.0 + 0.1 * (j as f64).sin());
    v /= v.norm();
    let mut sigma_sq = 0.0;
    for _ in 0..1000 {
        let w = &ct * (&c * &v);
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        if (next - sigma_sq).abs() <= 1e-14 * next {
            sigma_sq = next;
            break;
        }
        sigma_sq = next;
    }
    sigma_sq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RevenueSpec;
    use crate::presets;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_tiny_resolution() {
        assert!(build(&presets::model_a(10), 4).is_err());
    }

    #[test]
    fn a_inverse_on_ones_and_triangularity() {
        let p = presets::model_a(64);
        let ops = build(&p, 64).unwrap();
        let ones = DVector::from_element(65, 1.0);
        let y = &ops.a_inverse * ones;
        for j in 0..65 {
            let s = ops.grid.node(j);
            assert_abs_diff_eq!(y[j], -(1.0 - (-s).exp()), epsilon = 1e-14);
        }
        for j in 0..65 {
            for m in 0..65 {
                if m > j {
                    assert_eq!(ops.a_inverse[(j, m)], 0.0);
                }
                if m < j {
                    assert_eq!(ops.resolvent[(j, m)], 0.0);
                    assert_eq!(ops.adjoint_inverse[(j, m)], 0.0);
                }
            }
        }
        assert_abs_diff_eq!(ops.weights.sum(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn resolvent_on_ones() {
        let mut p = presets::model_a(10);
        p.s_bar = 2.0;
        p.lambda = 0.3;
        let ops = build(&p, 50).unwrap();
        let y = &ops.resolvent * DVector::from_element(51, 1.0);
        for j in 0..51 {
            let s = ops.grid.node(j);
            assert_abs_diff_eq!(
                y[j],
                (1.0 - (-1.3 * (2.0 - s)).exp()) / 1.3,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn constant_map_converges_in_one_iteration() {
        let mut p = presets::model_a(40);
        p.alpha = GridFunction::zeros(p.grid());
        let ops = build(&p, 40).unwrap();
        let x0 = GridFunction::from_fn(ops.grid, |s| 3.0 + s);
        let out = picard_fixed_point(&ops, &p, &x0, 1e-12, 100).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x.max_abs(), 0.0);
        assert_eq!(out.fitted_rate, 0.0);

        let mut p = presets::model_a(40);
        p.revenue = RevenueSpec::linear(0.8);
        p.q0 = 0.3;
        let ops = build(&p, 40).unwrap();
        let out = picard_fixed_point(&ops, &p, &x0, 1e-12, 100).unwrap();
        assert_eq!(out.iterations, 1);
        let (w1, w2) = ops.profile_basis(&p);
        let expect = w2 + w1.scale(0.8);
        assert_eq!(out.x.values(), expect.as_slice());
    }

    #[test]
    fn model_a_fixed_point_output() {
        let p = presets::model_a(500);
        let ops = build(&p, 500).unwrap();
        let out = picard_fixed_point(&ops, &p, &GridFunction::zeros(ops.grid), 1e-12, 500).unwrap();
        assert!(out.converged);
        // eta c1 with c1, eta from the exact antiderivatives.
        assert_abs_diff_eq!(
            ops.output(&out.x),
            0.714_577_396_962_970 * 0.399_428_535_313_468,
            epsilon = 1e-5
        );
        // Quadratic R: T contracts by exactly 2 a c1 = c1.
        assert_abs_diff_eq!(out.fitted_rate, 0.399_428_5, epsilon = 1e-4);
    }

    #[test]
    fn weak_form_residual_examples() {
        let p = presets::model_a(200);
        let ops = build(&p, 200).unwrap();
        let zero = GridFunction::zeros(ops.grid);
        assert_eq!(
            ops.residual_weak_form(&zero, &ControlPair::zeros(ops.grid), &p),
            0.0
        );

        // x = -A^{-1} applied to u1 plus u0 A^{-1} delta_0, with u smooth.
        let res = |n: usize| {
            let ops = build(&p, n).unwrap();
            let u1 = GridFunction::from_fn(ops.grid, |s| 1.0 + (2.0 * s).sin());
            let u0 = 0.7;
            let xv =
                -(&ops.a_inverse * DVector::from_column_slice(u1.values())) - ops.delta.scale(u0);
            let x = to_grid_function(ops.grid, &xv);
            let u = ControlPair::new(u0, u1);
            (ops.residual_weak_form(&x, &u, &p), x, u, ops)
        };
        let (r1, ..) = res(100);
        let (r2, x, u, ops) = res(200);
        assert!(r2 < 1e-4, "{r2}");
        assert!(r1 / r2 > 3.5, "{r1} {r2}");

        let shifted = x.map(|v| v + 0.1);
        assert!(ops.residual_weak_form(&shifted, &u, &p) > 1e-2);
    }

    #[test]
    fn adjoint_norm_below_bounds() {
        for (mu, s_bar) in [(0.1, 3.0), (5.0, 3.0), (1.0, 1.0), (2.0, 0.2)] {
            let mut p = presets::model_a(10);
            p.mu = mu;
            p.s_bar = s_bar;
            let ops = build(&p, 400).unwrap();
            let norm = weighted_operator_norm(&ops.adjoint_inverse, &ops.weights);
            let bound = (1.0 / mu).min(s_bar / std::f64::consts::SQRT_2);
            assert!(
                norm <= bound + 1e-3,
                "mu={mu} s_bar={s_bar}: {norm} > {bound}"
            );
            assert!(norm > 0.5 * bound);
        }
    }

    #[test]
    fn rate_fit_recovers_geometric_sequence() {
        let steps: Vec<f64> = (0..20).map(|k| 0.3f64.powi(k)).collect();
        assert_abs_diff_eq!(fit_rate(&steps, 1.0), 0.3, epsilon = 1e-12);
        assert_eq!(fit_rate(&[1.0, 0.0], 1.0), 0.0);
    }

    #[test]
    fn divergent_iteration_reports_no_convergence() {
        // Custom R' with slope far beyond the contraction range: oscillating blow-up.
        let mut p = presets::model_a(40);
        p.revenue = RevenueSpec::custom(
            "steep",
            |q| -20.0 * q * q + q,
            |q| -40.0 * q + 1.0,
            40.0,
            true,
        );
        let ops = build(&p, 40).unwrap();
        let err =
            picard_fixed_point(&ops, &p, &GridFunction::zeros(ops.grid), 1e-12, 50).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }
}
