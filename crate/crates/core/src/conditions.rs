//! Sufficient conditions for a unique equilibrium.
//!
//! The fixed-point map is a contraction when
//! `lambda + mu > |(A0*)^{-1}| |B|^2 [(h0*)'] [g0']`, with `|B| <= 1`,
//! `[(h0*)'] = |M_{1/(2 beta)}|` and `[g0'] = [R'] |alpha|_V^2`. Two bounds are
//! available for the inverse adjoint: `1/mu` from the growth bound of the
//! semigroup and `s_bar / sqrt(2)` from Cauchy-Schwarz on `[s, s_bar]`.

use serde::Serialize;

use crate::error::Error;
use crate::grid::GridFunction;
use crate::model::{ModelParams, RevenueFamily};
use crate::operators::{integrate, multiplier_half_beta_norm};

/// Largest `|alpha(s_bar)|` accepted as zero.
pub const ALPHA_BOUNDARY_TOL: f64 = 1e-9;

pub const SUFFICIENT_ONLY_NOTE: &str =
    "sufficient conditions only: a condition that does not hold does not imply that the equilibrium fails to exist or to be unique";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub margin: f64,
}

impl ConditionEntry {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs > rhs,
            margin: lhs - rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionConstants {
    /// `1 / mu`.
    pub adjoint_inverse_bound_growth: f64,
    /// `s_bar / sqrt(2)`.
    pub adjoint_inverse_bound_length: f64,
    pub b_norm: f64,
    /// Exact `|M_{1/(2 beta)}|`.
    pub multiplier_norm: f64,
    /// `[R']`.
    pub lipschitz_rprime: f64,
    /// `[g0'] = [R'] |alpha|_V^2`.
    pub lipschitz_g0: f64,
    /// `[(h0*)']`.
    pub lipschitz_h0_star: f64,
    /// `int alpha^2 + int (alpha' - mu alpha)^2`.
    pub alpha_v_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    pub constants: ConditionConstants,
    /// Name of the entry with the smallest right-hand side.
    pub best: String,
    pub note: &'static str,
}

impl ConditionReport {
    pub fn entry(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn best_entry(&self) -> &ConditionEntry {
        self.entry(&self.best).expect("best names an entry")
    }

    pub fn any_holds(&self) -> bool {
        self.entries.iter().any(|e| e.holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticVariantReport {
    pub entries: Vec<ConditionEntry>,
    /// `(1/2)(1 + 1/beta0)`.
    pub loose_multiplier_bound: f64,
    pub exact_multiplier_norm: f64,
    /// Whether the loose bound really bounds the exact norm for this `beta`.
    pub loose_bound_dominates: bool,
    /// `int alpha^2 + int alpha'^2 - mu alpha(0)^2`, reported for comparison.
    pub displayed_integral: f64,
    pub alpha_v_norm_sq: f64,
    pub note: &'static str,
}

impl QuadraticVariantReport {
    pub fn entry(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Second-order finite-difference derivative at every node.
pub fn derivative(f: &GridFunction) -> GridFunction {
    let v = f.values();
    let n = v.len() - 1;
    let h = f.h();
    let mut d = vec![0.0; v.len()];
    if n >= 2 {
        d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
        d[n] = (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * h);
    }
    for j in 1..n {
        d[j] = (v[j + 1] - v[j - 1]) / (2.0 * h);
    }
    GridFunction::new(f.grid(), d).expect("finite differences of finite data")
}

fn require_alpha_in_v(params: &ModelParams) -> Result<(), Error> {
    let value = params.alpha.last();
    if value.abs() > ALPHA_BOUNDARY_TOL {
        return Err(Error::AlphaNotInV {
            value,
            tol: ALPHA_BOUNDARY_TOL,
        });
    }
    Ok(())
}

/// `|alpha|_V^2 = int alpha^2 + int (alpha' - mu alpha)^2`.
pub fn alpha_v_norm_sq(params: &ModelParams) -> f64 {
    let a = &params.alpha;
    let da = derivative(a);
    let adj = da.axpy(-params.mu, a).expect("same grid");
    integrate(&a.map(|x| x * x)) + integrate(&adj.map(|x| x * x))
}

fn displayed_integral(params: &ModelParams) -> f64 {
    let a = &params.alpha;
    let da = derivative(a);
    integrate(&a.map(|x| x * x)) + integrate(&da.map(|x| x * x)) - params.mu * a.first().powi(2)
}

/// Both contraction conditions with the exact multiplier norm.
pub fn check_contraction(params: &ModelParams) -> Result<ConditionReport, Error> {
    require_alpha_in_v(params)?;
    let v_norm_sq = alpha_v_norm_sq(params);
    let lip_r = params.revenue.lipschitz_rprime();
    let lip_g0 = lip_r * v_norm_sq;
    let mult = multiplier_half_beta_norm(&params.beta());
    let b_norm = 1.0;
    let growth = 1.0 / params.mu;
    let length = params.s_bar / std::f64::consts::SQRT_2;
    let lhs = params.lambda + params.mu;

    let coupling = b_norm * b_norm * mult * lip_g0;
    let entries = vec![
        ConditionEntry::new("growth_bound", lhs, growth * coupling),
        ConditionEntry::new("length_bound", lhs, length * coupling),
    ];
    let best = if growth <= length {
        "growth_bound"
    } else {
        "length_bound"
    };
    Ok(ConditionReport {
        entries,
        constants: ConditionConstants {
            adjoint_inverse_bound_growth: growth,
            adjoint_inverse_bound_length: length,
            b_norm,
            multiplier_norm: mult,
            lipschitz_rprime: lip_r,
            lipschitz_g0: lip_g0,
            lipschitz_h0_star: mult,
            alpha_v_norm_sq: v_norm_sq,
        },
        best: best.to_string(),
        note: SUFFICIENT_ONLY_NOTE,
    })
}

/// Quadratic-revenue variants with `[R'] = 2a`, using both the loose
/// multiplier bound `(1/2)(1 + 1/beta0)` and the exact norm.
pub fn check_quadratic_variant(params: &ModelParams) -> Result<QuadraticVariantReport, Error> {
    let a = match params.revenue.family() {
        RevenueFamily::Quadratic { a, .. } => *a,
        other => {
            return Err(Error::WrongFamily {
                expected: "quadratic",
                got: other.name(),
            })
        }
    };
    require_alpha_in_v(params)?;
    let v_norm_sq = alpha_v_norm_sq(params);
    let lip_g0 = 2.0 * a * v_norm_sq;
    let loose = 0.5 * (1.0 + 1.0 / params.beta0);
    let exact = multiplier_half_beta_norm(&params.beta());
    let growth = 1.0 / params.mu;
    let length = params.s_bar / std::f64::consts::SQRT_2;
    let lhs = params.lambda + params.mu;
    Ok(QuadraticVariantReport {
        entries: vec![
            ConditionEntry::new("growth_bound_loose", lhs, growth * loose * lip_g0),
            ConditionEntry::new("length_bound_loose", lhs, length * loose * lip_g0),
            ConditionEntry::new("growth_bound_exact", lhs, growth * exact * lip_g0),
            ConditionEntry::new("length_bound_exact", lhs, length * exact * lip_g0),
        ],
        loose_multiplier_bound: loose,
        exact_multiplier_norm: exact,
        loose_bound_dominates: loose >= exact,
        displayed_integral: displayed_integral(params),
        alpha_v_norm_sq: v_norm_sq,
        note: SUFFICIENT_ONLY_NOTE,
    })
}
