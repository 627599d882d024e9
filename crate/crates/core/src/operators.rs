//! Kernel realizations of the state-space operators on node-sampled functions.
//!
//! The generator is `A0 f = -f' - mu f` with `f(0) = 0`. Its inverse, the
//! inverse of its adjoint and the resolvent `(lambda - A0*)^{-1}` are all
//! exponential convolutions, forward in age for `A^{-1}` and backward for the
//! adjoint side. They are evaluated by integrating the piecewise-linear
//! interpolant of the argument exactly against the kernel on every cell, so
//! the error is `O(h^2)` uniformly in the decay rate.
//!
//! The Dirac mass at age zero carried by the control operator is never placed
//! on the grid: it only enters through [`a_inverse_delta`] and [`b_star_apply`].

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::grid::{Grid, GridFunction};

/// An element `u = (u0, u1)` of the control space `R x L^2(0, s_bar)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPair {
    /// Boundary investment (new capital).
    pub u0: f64,
    /// Distributed investment across vintages.
    pub u1: GridFunction,
}

impl ControlPair {
    pub fn new(u0: f64, u1: GridFunction) -> Self {
        Self { u0, u1 }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            u0: 0.0,
            u1: GridFunction::zeros(grid),
        }
    }

    pub fn grid(&self) -> Grid {
        self.u1.grid()
    }

    pub fn sub(&self, other: &ControlPair) -> Result<ControlPair, Error> {
        Ok(ControlPair {
            u0: self.u0 - other.u0,
            u1: self.u1.sub(&other.u1)?,
        })
    }

    pub fn scale(&self, c: f64) -> ControlPair {
        ControlPair {
            u0: c * self.u0,
            u1: self.u1.scale(c),
        }
    }

    /// `(self | other)_U = u0 v0 + int u1 v1`.
    pub fn inner(&self, other: &ControlPair) -> Result<f64, Error> {
        Ok(self.u0 * other.u0 + inner(&self.u1, &other.u1)?)
    }

    pub fn norm(&self) -> f64 {
        (self.u0 * self.u0 + inner(&self.u1, &self.u1).unwrap_or(f64::NAN)).sqrt()
    }
}

/// Composite trapezoid rule on the function's grid.
pub fn integrate(f: &GridFunction) -> f64 {
    let v = f.values();
    let n = v.len() - 1;
    let interior: f64 = v[1..n].iter().sum();
    f.h() * (interior + 0.5 * (v[0] + v[n]))
}

/// `L^2` pairing `int f g` by the trapezoid rule.
pub fn inner(f: &GridFunction, g: &GridFunction) -> Result<f64, Error> {
    Ok(integrate(&f.zip_with(g, |a, b| a * b)?))
}

/// `(e^{t A0} x)(s) = e^{-mu t} x(s - t)` for `s >= t`, zero below.
pub fn semigroup_apply(x: &GridFunction, t: f64, mu: f64) -> Result<GridFunction, Error> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "semigroup time must be >= 0, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    let grid = x.grid();
    if t >= grid.s_bar {
        return Ok(GridFunction::zeros(grid));
    }
    let decay = (-mu * t).exp();
    // Node shifts are exact when t is a multiple of h.
    let shift = t / grid.h();
    let whole = shift.round();
    if (shift - whole).abs() < 1e-9 {
        let k = whole as usize;
        let vals = (0..grid.len())
            .map(|j| if j >= k { decay * x.at(j - k) } else { 0.0 })
            .collect();
        return Ok(GridFunction::from_raw(grid, vals));
    }
    Ok(GridFunction::from_fn(grid, |s| {
        if s >= t {
            decay * x.value_at(s - t)
        } else {
            0.0
        }
    }))
}

/// `(1 - e^{-x}) / x`, stable near zero.
fn phi1(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // sum_n (-x)^n / (n+1)!
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..16 {
            term *= -x / (n + 1) as f64;
            sum += term;
        }
        sum
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(1 - e^{-x}(1 + x)) / x^2`, stable near zero.
fn phi2(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // sum_n (-x)^n / (n! (n+2))
        let mut fact = 1.0;
        let mut pow = 1.0;
        let mut sum = 0.5;
        for n in 1..16 {
            fact *= n as f64;
            pow *= -x;
            sum += pow / (fact * (n + 2) as f64);
        }
        sum
    } else {
        (1.0 - (-x).exp() * (1.0 + x)) / (x * x)
    }
}

/// Cell weights for `int_0^h e^{-k t} l(t) dt` where `l` is linear with value
/// `f_near` at `t = 0` and `f_far` at `t = h`. Returns `(w_near, w_far)`.
pub(crate) fn exp_cell_weights(k: f64, h: f64) -> (f64, f64) {
    let x = k * h;
    let e0 = h * phi1(x);
    let e1 = h * phi2(x);
    (e0 - e1, e1)
}

/// `int_0^s e^{-k (s - sigma)} f(sigma) d sigma` at every node.
pub(crate) fn forward_exp_convolution(f: &GridFunction, k: f64) -> GridFunction {
    let grid = f.grid();
    let h = grid.h();
    let (w_near, w_far) = exp_cell_weights(k, h);
    let decay = (-k * h).exp();
    let v = f.values();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(acc);
    for j in 1..v.len() {
        acc = decay * acc + w_near * v[j] + w_far * v[j - 1];
        out.push(acc);
    }
    GridFunction::from_raw(grid, out)
}

/// `int_s^{s_bar} e^{-k (sigma - s)} f(sigma) d sigma` at every node.
pub(crate) fn backward_exp_convolution(f: &GridFunction, k: f64) -> GridFunction {
    let grid = f.grid();
    let h = grid.h();
    let (w_near, w_far) = exp_cell_weights(k, h);
    let decay = (-k * h).exp();
    let v = f.values();
    let n = v.len() - 1;
    let mut out = vec![0.0; v.len()];
    let mut acc = 0.0;
    for j in (0..n).rev() {
        acc = decay * acc + w_near * v[j] + w_far * v[j + 1];
        out[j] = acc;
    }
    GridFunction::from_raw(grid, out)
}

/// `(A^{-1} f)(s) = -int_0^s e^{-mu (s - sigma)} f(sigma) d sigma`.
pub fn a_inverse_apply(f: &GridFunction, mu: f64) -> GridFunction {
    forward_exp_convolution(f, mu).scale(-1.0)
}

/// `A^{-1} delta_0 = -e^{-mu s}`.
pub fn a_inverse_delta(grid: Grid, mu: f64) -> GridFunction {
    GridFunction::from_fn(grid, |s| -(-mu * s).exp())
}

/// `A^{-1} B u = u0 A^{-1} delta_0 + A^{-1} u1`.
pub fn a_inverse_b_apply(u: &ControlPair, mu: f64) -> Result<GridFunction, Error> {
    a_inverse_apply(&u.u1, mu).axpy(u.u0, &a_inverse_delta(u.grid(), mu))
}

/// `((A0*)^{-1} f)(s) = -int_s^{s_bar} e^{-mu (sigma - s)} f(sigma) d sigma`.
pub fn adjoint_inverse_apply(f: &GridFunction, mu: f64) -> GridFunction {
    backward_exp_convolution(f, mu).scale(-1.0)
}

/// `((lambda - A0*)^{-1} f)(s) = int_s^{s_bar} e^{-(mu + lambda)(sigma - s)} f(sigma) d sigma`.
pub fn resolvent_apply(f: &GridFunction, mu: f64, lambda: f64) -> Result<GridFunction, Error> {
    if !(mu + lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "resolvent needs mu + lambda > 0, got {}",
            mu + lambda
        )));
    }
    Ok(backward_exp_convolution(f, mu + lambda))
}

/// `B* v = (v(0), v)`.
pub fn b_star_apply(v: &GridFunction) -> ControlPair {
    ControlPair {
        u0: v.first(),
        u1: v.clone(),
    }
}

/// `M_{1/(2 beta)} u = (u0 / (2 beta0), u1 / (2 beta1))`.
pub fn multiplier_half_beta(u: &ControlPair, beta: &ControlPair) -> Result<ControlPair, Error> {
    Ok(ControlPair {
        u0: u.u0 / (2.0 * beta.u0),
        u1: u.u1.zip_with(&beta.u1, |x, b| x / (2.0 * b))?,
    })
}

/// Exact `L(U)` norm of `M_{1/(2 beta)}`.
pub fn multiplier_half_beta_norm(beta: &ControlPair) -> f64 {
    let b_min = beta.u0.min(beta.u1.min());
    1.0 / (2.0 * b_min)
}

/// Conjugate cost `h0*(u) = (u0 - q0)^2 / (4 beta0) + int (u1 - q1)^2 / (4 beta1)`.
pub fn conjugate_cost(u: &ControlPair, beta: &ControlPair, q: &ControlPair) -> Result<f64, Error> {
    let d = u.sub(q)?;
    let boundary = d.u0 * d.u0 / (4.0 * beta.u0);
    let distributed = d.u1.zip_with(&beta.u1, |x, b| x * x / (4.0 * b))?;
    Ok(boundary + integrate(&distributed))
}

/// Quadratic-linear investment cost `h0(u) = beta0 u0^2 + q0 u0 + int (beta1 u1^2 + q1 u1)`.
pub fn cost(u: &ControlPair, beta: &ControlPair, q: &ControlPair) -> Result<f64, Error> {
    u.u1.check_same_grid(&beta.u1, "cost beta1")?;
    u.u1.check_same_grid(&q.u1, "cost q1")?;
    let boundary = beta.u0 * u.u0 * u.u0 + q.u0 * u.u0;
    let vals: Vec<f64> =
        u.u1.values()
            .iter()
            .zip(beta.u1.values())
            .zip(q.u1.values())
            .map(|((&x, &b), &c)| b * x * x + c * x)
            .collect();
    Ok(boundary + integrate(&GridFunction::from_raw(u.grid(), vals)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(s_bar: f64, n: usize) -> Grid {
        Grid::new(s_bar, n).unwrap()
    }

    fn half_beta(g: Grid) -> ControlPair {
        ControlPair::new(0.5, GridFunction::constant(g, 0.5))
    }

    #[test]
    fn trapezoid_is_exact_on_constants_and_linears() {
        let g = grid(1.0, 7);
        assert_abs_diff_eq!(
            integrate(&GridFunction::constant(g, 1.0)),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            integrate(&GridFunction::from_fn(g, |s| s)),
            0.5,
            epsilon = 1e-15
        );
        let g3 = grid(2.5, 13);
        assert_abs_diff_eq!(
            integrate(&GridFunction::constant(g3, 1.0)),
            2.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn trapezoid_quadratic_within_error_bound() {
        // |E| <= s_bar h^2 / 12 * max|f''| = 1e-6 / 6.
        let g = grid(1.0, 1000);
        let got = integrate(&GridFunction::from_fn(g, |s| s * s));
        assert!((got - 1.0 / 3.0).abs() <= 1e-6);
        assert!((got - 1.0 / 3.0).abs() <= 1e-6 / 6.0 + 1e-15);
    }

    #[test]
    fn cell_weights_match_series_and_closed_form() {
        // Both branches of phi1/phi2 around the switch point.
        for &x in &[0.0999999, 0.1000001, 1e-8, 0.0, 3.0] {
            let h = 1.0;
            let (wn, wf) = exp_cell_weights(x, h);
            // Midpoint-refined reference.
            let m = 20000;
            let (mut rn, mut rf) = (0.0, 0.0);
            for i in 0..m {
                let t = (i as f64 + 0.5) / m as f64;
                let e = (-x * t).exp() / m as f64;
                rn += e * (1.0 - t);
                rf += e * t;
            }
            assert!((wn - rn).abs() < 1e-9, "x={x}: {wn} vs {rn}");
            assert!((wf - rf).abs() < 1e-9, "x={x}: {wf} vs {rf}");
        }
    }

    #[test]
    fn semigroup_identity_decay_and_nilpotency() {
        let g = grid(1.0, 100);
        let x = GridFunction::from_fn(g, |s| (3.0 * s).sin() + 1.0);
        assert_eq!(semigroup_apply(&x, 0.0, 1.0).unwrap(), x);

        let one = GridFunction::constant(g, 1.0);
        let y = semigroup_apply(&one, 0.5, 1.0).unwrap();
        for (j, s) in g.nodes().enumerate() {
            let expect = if s >= 0.5 { (-0.5f64).exp() } else { 0.0 };
            assert_abs_diff_eq!(y.at(j), expect, epsilon = 1e-15);
        }
        assert_abs_diff_eq!((-0.5f64).exp(), 0.606531, epsilon = 1e-6);

        for t in [1.0, 1.5] {
            assert_eq!(semigroup_apply(&x, t, 0.3).unwrap().max_abs(), 0.0);
        }
        assert!(semigroup_apply(&x, -0.1, 1.0).is_err());
    }

    #[test]
    fn semigroup_property_on_grid_multiples() {
        let g = grid(2.0, 200);
        let x = GridFunction::from_fn(g, |s| (s * 1.7).cos());
        let h = g.h();
        for (a, b) in [(3usize, 5usize), (10, 41), (0, 7)] {
            let (t1, t2) = (a as f64 * h, b as f64 * h);
            let two = semigroup_apply(&semigroup_apply(&x, t1, 0.7).unwrap(), t2, 0.7).unwrap();
            let one = semigroup_apply(&x, t1 + t2, 0.7).unwrap();
            assert!(two.sub(&one).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn semigroup_property_off_grid_is_second_order() {
        // x(0) = x'(0) = 0 keeps the zero extension C^1 across the translated origin.
        let x_of = |n| GridFunction::from_fn(grid(1.0, n), |s: f64| 1.0 - (2.0 * s).cos());
        let err = |n| {
            let x = x_of(n);
            let two =
                semigroup_apply(&semigroup_apply(&x, 0.1234, 0.5).unwrap(), 0.2345, 0.5).unwrap();
            let one = semigroup_apply(&x, 0.1234 + 0.2345, 0.5).unwrap();
            two.sub(&one).unwrap().max_abs()
        };
        let (e1, e2) = (err(100), err(200));
        assert!(e1 < 5e-4, "{e1}");
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    #[test]
    fn a_inverse_examples() {
        let g = grid(1.0, 1000);
        assert_eq!(a_inverse_apply(&GridFunction::zeros(g), 1.0).max_abs(), 0.0);

        let y = a_inverse_apply(&GridFunction::constant(g, 1.0), 1.0);
        for (j, s) in g.nodes().enumerate() {
            assert_abs_diff_eq!(y.at(j), -(1.0 - (-s).exp()), epsilon = 1e-13);
        }
        // int_0^s e^{-(s - sigma)} sigma d sigma = s - 1 + e^{-s}; linear f is exact.
        let y = a_inverse_apply(&GridFunction::from_fn(g, |s| s), 1.0);
        assert_abs_diff_eq!(y.last(), -(-1.0f64).exp(), epsilon = 1e-13);
        assert_abs_diff_eq!(y.last(), -0.367879, epsilon = 1e-6);
    }

    #[test]
    fn a_inverse_delta_examples() {
        let g = grid(1.0, 10);
        let d = a_inverse_delta(g, 1.0);
        assert_eq!(d.first(), -1.0);
        assert_abs_diff_eq!(d.last(), -0.367879, epsilon = 1e-6);
        let mut prev = f64::NEG_INFINITY;
        for mu in [1.0, 5.0, 20.0, 100.0] {
            let v = a_inverse_delta(g, mu).at(5);
            assert!(v > prev && v < 0.0);
            prev = v;
        }
        assert!(prev.abs() < 1e-20);
    }

    #[test]
    fn adjoint_inverse_examples() {
        let g = grid(1.0, 500);
        let y = adjoint_inverse_apply(&GridFunction::constant(g, 1.0), 1.0);
        for (j, s) in g.nodes().enumerate() {
            assert_abs_diff_eq!(y.at(j), -(1.0 - (-(1.0 - s)).exp()), epsilon = 1e-14);
        }
        let f = GridFunction::from_fn(g, |s| (5.0 * s).exp());
        assert_eq!(adjoint_inverse_apply(&f, 2.0).last(), 0.0);
        assert_eq!(
            adjoint_inverse_apply(&GridFunction::zeros(g), 2.0).max_abs(),
            0.0
        );
    }

    #[test]
    fn resolvent_examples() {
        let g = grid(1.0, 400);
        let y = resolvent_apply(&GridFunction::constant(g, 1.0), 1.0, 1.0).unwrap();
        for (j, s) in g.nodes().enumerate() {
            assert_abs_diff_eq!(
                y.at(j),
                (1.0 - (-2.0 * (1.0 - s)).exp()) / 2.0,
                epsilon = 1e-14
            );
        }
        assert_abs_diff_eq!(y.first(), 0.432332, epsilon = 1e-6);
        assert_eq!(y.last(), 0.0);
        assert!(resolvent_apply(&y, -1.0, 0.5).is_err());
    }

    #[test]
    fn resolvent_at_zero_discount_is_minus_adjoint_inverse() {
        let g = grid(1.5, 300);
        let f = GridFunction::from_fn(g, |s| s.cos() - 0.3 * s);
        let r = resolvent_apply(&f, 0.8, 0.0).unwrap();
        let a = adjoint_inverse_apply(&f, 0.8);
        for j in 0..g.len() {
            assert_eq!(r.at(j), -a.at(j));
        }
    }

    #[test]
    fn b_star_examples() {
        let g = grid(1.0, 10);
        let v = GridFunction::from_fn(g, |s| 1.0 - s);
        let u = b_star_apply(&v);
        assert_eq!(u.u0, 1.0);
        assert_eq!(u.u1, v);
        let z = b_star_apply(&GridFunction::zeros(g));
        assert_eq!((z.u0, z.u1.max_abs()), (0.0, 0.0));
        let e = b_star_apply(&GridFunction::from_fn(g, |s| (-s).exp()));
        assert_eq!(e.u0, 1.0);
    }

    #[test]
    fn multiplier_examples() {
        let g = grid(1.0, 10);
        let u = ControlPair::new(2.0, GridFunction::from_fn(g, |s| s));
        let id = multiplier_half_beta(&u, &half_beta(g)).unwrap();
        assert_eq!(id, u);
        let z = multiplier_half_beta(&ControlPair::zeros(g), &half_beta(g)).unwrap();
        assert_eq!(z, ControlPair::zeros(g));
        let beta = ControlPair::new(1.0, GridFunction::constant(g, 1.0));
        assert_eq!(multiplier_half_beta(&u, &beta).unwrap().u0, 1.0);
        assert_eq!(
            multiplier_half_beta_norm(&ControlPair::new(0.25, GridFunction::constant(g, 1.0))),
            2.0
        );
    }

    #[test]
    fn cost_and_conjugate_examples() {
        let g = grid(1.0, 10);
        let beta = half_beta(g);
        let zero = ControlPair::zeros(g);
        let q = ControlPair::new(0.3, GridFunction::from_fn(g, |s| s));
        assert_eq!(conjugate_cost(&q, &beta, &q).unwrap(), 0.0);
        let e0 = ControlPair::new(1.0, GridFunction::zeros(g));
        assert_abs_diff_eq!(
            conjugate_cost(&e0, &beta, &zero).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let e1 = ControlPair::new(0.0, GridFunction::constant(g, 1.0));
        assert_abs_diff_eq!(
            conjugate_cost(&e1, &beta, &zero).unwrap(),
            0.5,
            epsilon = 1e-15
        );

        assert_eq!(cost(&zero, &beta, &zero).unwrap(), 0.0);
        let both = ControlPair::new(1.0, GridFunction::constant(g, 1.0));
        assert_abs_diff_eq!(cost(&both, &beta, &zero).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fenchel_young_inequality_on_random_pairs() {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(7);
        let g = grid(1.3, 64);
        for _ in 0..50 {
            let mut rand_fn = |scale: f64, shift: f64| {
                let (a, b, c): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
                GridFunction::from_fn(g, move |s| {
                    shift + scale * (a + b * s + c * (3.0 * s).sin())
                })
            };
            let beta = ControlPair::new(0.7, rand_fn(1.0, 0.0).map(|b| 0.1 + b.abs()));
            let q = ControlPair::new(0.5, rand_fn(2.0, -1.0));
            let u = ControlPair::new(-0.7, rand_fn(3.0, -1.5));
            let p = ControlPair::new(1.1, rand_fn(3.0, -1.0));
            let lhs = cost(&u, &beta, &q).unwrap() + conjugate_cost(&p, &beta, &q).unwrap();
            let rhs = p.inner(&u).unwrap();
            assert!(lhs >= rhs - 1e-12, "{lhs} < {rhs}");
            // Equality at p = h0'(u) = 2 beta u + q.
            let grad = ControlPair::new(
                2.0 * beta.u0 * u.u0 + q.u0,
                u.u1.zip_with(&beta.u1, |x, b| 2.0 * b * x)
                    .unwrap()
                    .axpy(1.0, &q.u1)
                    .unwrap(),
            );
            let lhs = cost(&u, &beta, &q).unwrap() + conjugate_cost(&grad, &beta, &q).unwrap();
            assert!((lhs - grad.inner(&u).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn generator_stencil_inverts_a_inverse() {
        // -(y' + mu y) with y = A^{-1} f recovers f: since A y = f and A y = -y' - mu y.
        let mu = 1.3;
        let err = |n: usize| {
            let g = grid(1.0, n);
            let f = GridFunction::from_fn(g, |s: f64| s * (2.0 * s).cos());
            let y = a_inverse_apply(&f, mu);
            let h = g.h();
            let mut e: f64 = 0.0;
            for j in (n / 10)..n {
                let dy = (y.at(j + 1) - y.at(j - 1)) / (2.0 * h);
                e = e.max((-dy - mu * y.at(j) - f.at(j)).abs());
            }
            e
        };
        let (e1, e2) = (err(200), err(400));
        assert!(e1 < 1e-4, "{e1}");
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    proptest! {
        #[test]
        fn adjoint_identity(a in -2.0..2.0f64, b in -2.0..2.0f64, c in 0.5..4.0f64,
                            d in -1.0..1.0f64, mu in 0.1..5.0f64, s_bar in 0.3..3.0f64) {
            let g = grid(s_bar, 400);
            let f = GridFunction::from_fn(g, |s| a + b * (c * s).sin());
            let k = GridFunction::from_fn(g, |s| d * s * s + (-c * s).exp());
            let lhs = inner(&a_inverse_apply(&f, mu), &k).unwrap();
            let rhs = inner(&f, &adjoint_inverse_apply(&k, mu)).unwrap();
            let scale = 1.0 + f.max_abs() * k.max_abs() * s_bar * s_bar;
            prop_assert!((lhs - rhs).abs() <= 1e-4 * scale, "{} vs {}", lhs, rhs);
        }
    }
}
