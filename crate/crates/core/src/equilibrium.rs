//! Equilibrium points for the quadratic-linear investment cost.
//!
//! The closed-loop fixed-point map reduces to `T x = R'(<alpha, x>) w1 + w2`,
//! so every equilibrium has the form `x = w2 + eta w1` with `eta` a root of the
//! scalar equation `eta = R'(c2 + c1 eta)`, where `c1 = <alpha, w1>` and
//! `c2 = <alpha, w2>`.

use serde::Serialize;

use crate::error::Error;
use crate::grid::GridFunction;
use crate::model::{ModelParams, RevenueFamily, RevenueSpec};
use crate::operators::{
    a_inverse_b_apply, b_star_apply, inner, multiplier_half_beta, resolvent_apply, ControlPair,
};

/// Residual tolerance of the scalar solve.
pub const ETA_TOLERANCE: f64 = 1e-12;
const MAX_BISECTIONS: usize = 400;
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// Strong-form `|x' + mu x - u1*|` at interior nodes plus the boundary defect.
    pub stationarity: f64,
    /// `|eta - R'(c2 + c1 eta)|`.
    pub scalar_equation: f64,
    /// `|u* - M_{1/(2 beta)}(-B* p - q)|_U` with `p` recomputed from `x`.
    pub extremality: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    pub eta: f64,
    pub x_bar: GridFunction,
    pub w1: GridFunction,
    pub w2: GridFunction,
    pub c1: f64,
    pub c2: f64,
    /// Equilibrium output `<alpha, x_bar>`.
    pub output: f64,
    pub alpha_bar: GridFunction,
    pub u_star: ControlPair,
    pub p_bar: GridFunction,
    pub residuals: Residuals,
}

/// Discounted return of a unit of capital by age, `(lambda - A0*)^{-1} alpha`.
pub fn alpha_bar(params: &ModelParams) -> Result<GridFunction, Error> {
    resolvent_apply(&params.alpha, params.mu, params.lambda)
}

fn w1_from_alpha_bar(
    params: &ModelParams,
    alpha_bar: &GridFunction,
) -> Result<GridFunction, Error> {
    let scaled = multiplier_half_beta(&b_star_apply(alpha_bar), &params.beta())?;
    Ok(a_inverse_b_apply(&scaled, params.mu)?.scale(-1.0))
}

/// `w1 = -A^{-1} B M_{1/(2 beta)} B* (lambda - A0*)^{-1} alpha`.
pub fn compute_w1(params: &ModelParams) -> Result<GridFunction, Error> {
    w1_from_alpha_bar(params, &alpha_bar(params)?)
}

/// `w2 = A^{-1} B M_{1/(2 beta)} q`, i.e.
/// `w2(s) = -(q0 / 2 beta0) e^{-mu s} - int_0^s e^{-mu (s - sigma)} q1 / (2 beta1) d sigma`.
pub fn compute_w2(params: &ModelParams) -> Result<GridFunction, Error> {
    a_inverse_b_apply(
        &multiplier_half_beta(&params.q(), &params.beta())?,
        params.mu,
    )
}

fn scalar_gap(revenue: &RevenueSpec, c1: f64, c2: f64, eta: f64) -> f64 {
    eta - revenue.prime(c2 + c1 * eta)
}

/// Root of `g(eta) = eta - R'(c2 + c1 eta)` by bisection.
///
/// For `c1 >= 0` and nonincreasing `R'` the root lies between `0` and
/// `R'(c2)`; otherwise the bracket is grown from `[-1, 1]` by doubling.
pub fn bisect_eta(revenue: &RevenueSpec, c1: f64, c2: f64) -> Result<f64, Error> {
    let g = |eta: f64| scalar_gap(revenue, c1, c2, eta);
    let r0 = revenue.prime(c2);
    if !r0.is_finite() {
        return Err(Error::BracketFailure(format!(
            "R'(c2) is not finite at c2 = {c2}"
        )));
    }

    let (mut lo, mut hi) = (r0.min(0.0), r0.max(0.0));
    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if !(g_lo < 0.0 && g_hi > 0.0) {
        lo = -1.0;
        hi = 1.0;
        let mut found = false;
        for _ in 0..=MAX_DOUBLINGS {
            g_lo = g(lo);
            g_hi = g(hi);
            if g_lo <= 0.0 && g_hi >= 0.0 {
                found = true;
                break;
            }
            lo *= 2.0;
            hi *= 2.0;
        }
        if !found {
            return Err(Error::BracketFailure(format!(
                "no sign change of eta - R'(c2 + c1 eta) on [{lo:e}, {hi:e}] (c1 = {c1}, c2 = {c2})"
            )));
        }
        if g_lo == 0.0 {
            return Ok(lo);
        }
        if g_hi == 0.0 {
            return Ok(hi);
        }
    }

    let mut best = if g_lo.abs() < g_hi.abs() { lo } else { hi };
    let mut best_gap = g(best).abs();
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm.abs() < best_gap {
            best = mid;
            best_gap = gm.abs();
        }
        if best_gap <= ETA_TOLERANCE {
            break;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Solves `eta = R'(c2 + c1 eta)`: closed form for the quadratic and log
/// families, bisection for power and custom revenues.
pub fn solve_eta(revenue: &RevenueSpec, c1: f64, c2: f64) -> Result<f64, Error> {
    match revenue.family() {
        RevenueFamily::Quadratic { a, b } => {
            let denom = 1.0 + 2.0 * a * c1;
            if denom <= 0.0 {
                return Err(Error::BracketFailure(format!(
                    "1 + 2 a c1 = {denom} is not positive"
                )));
            }
            Ok((b - 2.0 * a * c2) / denom)
        }
        RevenueFamily::Log => {
            if c2 + c1 < 0.0 {
                // Output stays on the linear branch, where R' = 1.
                return Ok(1.0);
            }
            let p = 1.0 + c2;
            if c1 < 1e-12 {
                return Ok(1.0 / p);
            }
            // (sqrt(p^2 + 4 c1) - p) / (2 c1), rationalized against cancellation.
            Ok(2.0 / (p + (p * p + 4.0 * c1).sqrt()))
        }
        RevenueFamily::Power { .. } | RevenueFamily::Custom { .. } => bisect_eta(revenue, c1, c2),
    }
}

/// Assembles the equilibrium profile, control and co-state.
pub fn assemble(params: &ModelParams) -> Result<EquilibriumResult, Error> {
    let alpha_bar = alpha_bar(params)?;
    let w1 = w1_from_alpha_bar(params, &alpha_bar)?;
    let w2 = compute_w2(params)?;
    let c1 = inner(&params.alpha, &w1)?;
    let c2 = inner(&params.alpha, &w2)?;
    let eta = solve_eta(&params.revenue, c1, c2)?;
    let x_bar = w2.axpy(eta, &w1)?;
    let output = inner(&params.alpha, &x_bar)?;

    let shadow = b_star_apply(&alpha_bar).scale(eta).sub(&params.q())?;
    let u_star = multiplier_half_beta(&shadow, &params.beta())?;
    let p_bar = alpha_bar.scale(-eta);

    let mut result = EquilibriumResult {
        eta,
        x_bar,
        w1,
        w2,
        c1,
        c2,
        output,
        alpha_bar,
        u_star,
        p_bar,
        residuals: Residuals {
            stationarity: 0.0,
            scalar_equation: scalar_gap(&params.revenue, c1, c2, eta).abs(),
            extremality: 0.0,
        },
    };
    result.residuals.stationarity = stationarity_residual(&result, params)?;
    result.residuals.extremality = extremality_residual(&result, params)?;
    Ok(result)
}

/// `max_j |D_h x + mu x - u1*|` over interior nodes plus `|x(0) - u0*|`.
pub fn stationarity_residual(
    result: &EquilibriumResult,
    params: &ModelParams,
) -> Result<f64, Error> {
    let x = &result.x_bar;
    let u1 = &result.u_star.u1;
    x.check_same_grid(u1, "stationarity residual")?;
    let h = x.h();
    let n = x.n_cells();
    let interior = (1..n)
        .map(|j| ((x.at(j + 1) - x.at(j - 1)) / (2.0 * h) + params.mu * x.at(j) - u1.at(j)).abs())
        .fold(0.0, f64::max);
    Ok(interior + (x.first() - result.u_star.u0).abs())
}

/// Co-state from the state: `(lambda - A0*)^{-1} g0'(x)` with
/// `g0'(x) = -R'(<alpha, x>) alpha`.
pub fn costate_from_state(x: &GridFunction, params: &ModelParams) -> Result<GridFunction, Error> {
    let slope = params.revenue.prime(inner(&params.alpha, x)?);
    resolvent_apply(&params.alpha.scale(-slope), params.mu, params.lambda)
}

/// `|u - M_{1/(2 beta)}(-B* p - q)|_U`.
pub fn extremality_defect(
    u: &ControlPair,
    p: &GridFunction,
    params: &ModelParams,
) -> Result<f64, Error> {
    let target = multiplier_half_beta(
        &b_star_apply(p).scale(-1.0).sub(&params.q())?,
        &params.beta(),
    )?;
    Ok(u.sub(&target)?.norm())
}

/// Extremality defect of `u*` against the co-state recomputed from `x_bar`.
pub fn extremality_residual(
    result: &EquilibriumResult,
    params: &ModelParams,
) -> Result<f64, Error> {
    let p = costate_from_state(&result.x_bar, params)?;
    extremality_defect(&result.u_star, &p, params)
}
