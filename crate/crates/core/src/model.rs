//! Problem data: rates, output weight, quadratic-linear investment cost and
//! the revenue family. Everything downstream reads a validated [`ModelParams`].

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::error::Error;
use crate::grid::{Grid, GridFunction};
use crate::operators::ControlPair;

/// Default strict lower bound for `beta0` and `beta1`.
pub const DEFAULT_BETA_FLOOR: f64 = 1e-9;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RevenueFamily {
    /// `R(Q) = -a Q^2 + b Q`, `a > 0`.
    Quadratic { a: f64, b: f64 },
    /// `R(Q) = ln(1 + Q)` for `Q >= 0`, `R(Q) = Q` below.
    Log,
    /// `R(Q) = (1 + Q)^gamma - 1` for `Q >= 0`, `R(Q) = gamma Q` below.
    Power { gamma: f64 },
    /// Caller-supplied `R`, `R'`.
    Custom { name: String },
}

impl RevenueFamily {
    pub fn name(&self) -> &'static str {
        match self {
            RevenueFamily::Quadratic { .. } => "quadratic",
            RevenueFamily::Log => "log",
            RevenueFamily::Power { .. } => "power",
            RevenueFamily::Custom { .. } => "custom",
        }
    }
}

/// Revenue function `R` together with the data the solvers and condition
/// checkers need: `R'`, the Lipschitz constant of `R'` and concavity.
#[derive(Clone)]
pub struct RevenueSpec {
    family: RevenueFamily,
    custom: Option<(ScalarFn, ScalarFn)>,
    lipschitz_rprime: f64,
    concave: bool,
}

impl fmt::Debug for RevenueSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RevenueSpec")
            .field("family", &self.family)
            .field("lipschitz_rprime", &self.lipschitz_rprime)
            .field("concave", &self.concave)
            .finish()
    }
}

impl RevenueSpec {
    pub fn quadratic(a: f64, b: f64) -> Self {
        Self {
            family: RevenueFamily::Quadratic { a, b },
            custom: None,
            lipschitz_rprime: 2.0 * a,
            concave: true,
        }
    }

    pub fn log() -> Self {
        Self {
            family: RevenueFamily::Log,
            custom: None,
            lipschitz_rprime: 1.0,
            concave: true,
        }
    }

    pub fn power(gamma: f64) -> Self {
        Self {
            family: RevenueFamily::Power { gamma },
            custom: None,
            // sup |R''| is attained at Q = 0+.
            lipschitz_rprime: gamma * (1.0 - gamma),
            concave: true,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz_rprime: f64,
        concave: bool,
    ) -> Self {
        Self {
            family: RevenueFamily::Custom { name: name.into() },
            custom: Some((Arc::new(value), Arc::new(prime))),
            lipschitz_rprime,
            concave,
        }
    }

    /// `R(Q) = b Q`.
    pub fn linear(b: f64) -> Self {
        Self::custom("linear", move |q| b * q, move |_| b, 0.0, true)
    }

    pub fn family(&self) -> &RevenueFamily {
        &self.family
    }

    pub fn lipschitz_rprime(&self) -> f64 {
        self.lipschitz_rprime
    }

    pub fn is_concave(&self) -> bool {
        self.concave
    }

    pub fn value(&self, q: f64) -> f64 {
        match &self.family {
            RevenueFamily::Quadratic { a, b } => -a * q * q + b * q,
            RevenueFamily::Log => {
                if q >= 0.0 {
                    q.ln_1p()
                } else {
                    q
                }
            }
            RevenueFamily::Power { gamma } => {
                if q >= 0.0 {
                    (gamma * q.ln_1p()).exp_m1()
                } else {
                    gamma * q
                }
            }
            RevenueFamily::Custom { .. } => (self.custom.as_ref().expect("custom revenue").0)(q),
        }
    }

    pub fn prime(&self, q: f64) -> f64 {
        match &self.family {
            RevenueFamily::Quadratic { a, b } => -2.0 * a * q + b,
            RevenueFamily::Log => {
                if q >= 0.0 {
                    1.0 / (1.0 + q)
                } else {
                    1.0
                }
            }
            RevenueFamily::Power { gamma } => {
                if q >= 0.0 {
                    gamma * (1.0 + q).powf(gamma - 1.0)
                } else {
                    *gamma
                }
            }
            RevenueFamily::Custom { .. } => (self.custom.as_ref().expect("custom revenue").1)(q),
        }
    }
}

/// `R'(Q)` for the given revenue specification.
pub fn revenue_prime(spec: &RevenueSpec, q: f64) -> f64 {
    spec.prime(q)
}

/// Model constants and cost data.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Depreciation rate.
    pub mu: f64,
    /// Discount rate.
    pub lambda: f64,
    /// Maximal capital age.
    pub s_bar: f64,
    /// Output weight alpha(s) >= 0.
    pub alpha: GridFunction,
    pub beta0: f64,
    pub beta1: GridFunction,
    pub q0: f64,
    pub q1: GridFunction,
    pub revenue: RevenueSpec,
    /// Strict lower bound for beta0 and beta1.
    pub beta_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} must be > 0 (got {value})")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("{name} must stay above the cost floor {floor:e} (min {min})")]
    CostFloorViolated {
        name: &'static str,
        min: f64,
        floor: f64,
    },
    #[error("grid of {name} does not match the model grid")]
    GridMismatch { name: &'static str },
    #[error("revenue is flagged concave but R' increases near Q = {at}")]
    NonConcaveRevenue { at: f64 },
    #[error("output weight alpha must be >= 0 (min {min})")]
    NegativeOutputWeight { min: f64 },
    #[error("invalid revenue parameter: {0}")]
    InvalidRevenue(String),
    #[error("{name} must be finite")]
    NonFinite { name: &'static str },
}

const CONCAVITY_PROBES: usize = 401;
const CONCAVITY_RANGE: (f64, f64) = (-10.0, 10.0);

impl ModelParams {
    /// Model grid (the grid of `alpha`).
    pub fn grid(&self) -> Grid {
        self.alpha.grid()
    }

    /// Cost curvature `(beta0, beta1)` as an element of the control space.
    pub fn beta(&self) -> ControlPair {
        ControlPair::new(self.beta0, self.beta1.clone())
    }

    /// Linear cost coefficient `(q0, q1)`.
    pub fn q(&self) -> ControlPair {
        ControlPair::new(self.q0, self.q1.clone())
    }

    /// Growth bound of the uncontrolled semigroup, `-mu`.
    pub fn semigroup_type(&self) -> f64 {
        -self.mu
    }

    pub fn validate(self) -> Result<Self, Error> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Every invariant violation, in a fixed order.
    pub fn violations(&self) -> Vec<ModelError> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("mu", self.mu),
            ("lambda", self.lambda),
            ("s_bar", self.s_bar),
            ("beta0", self.beta0),
            ("q0", self.q0),
            ("beta_floor", self.beta_floor),
        ] {
            if !v.is_finite() {
                errs.push(ModelError::NonFinite { name });
            }
        }
        for (name, v) in [
            ("mu", self.mu),
            ("lambda", self.lambda),
            ("s_bar", self.s_bar),
        ] {
            if v.is_finite() && v <= 0.0 {
                errs.push(ModelError::NonPositiveRate { name, value: v });
            }
        }

        let grid = self.alpha.grid();
        if grid.s_bar != self.s_bar {
            errs.push(ModelError::GridMismatch { name: "alpha" });
        }
        for (name, f) in [("beta1", &self.beta1), ("q1", &self.q1)] {
            if f.grid() != grid {
                errs.push(ModelError::GridMismatch { name });
            }
        }

        let floor = self.beta_floor.max(0.0);
        if !(self.beta0 > floor) {
            errs.push(ModelError::CostFloorViolated {
                name: "beta0",
                min: self.beta0,
                floor,
            });
        }
        let b1_min = self.beta1.min();
        if !(b1_min > floor) {
            errs.push(ModelError::CostFloorViolated {
                name: "beta1",
                min: b1_min,
                floor,
            });
        }
        let a_min = self.alpha.min();
        if a_min < 0.0 {
            errs.push(ModelError::NegativeOutputWeight { min: a_min });
        }

        errs.extend(revenue_violations(&self.revenue));
        errs
    }
}

/// Validates `params` and returns them unchanged, or the full violation list.
pub fn validate(params: ModelParams) -> Result<ModelParams, Error> {
    params.validate()
}

fn revenue_violations(rev: &RevenueSpec) -> Vec<ModelError> {
    let mut errs = Vec::new();
    match rev.family() {
        RevenueFamily::Quadratic { a, b } => {
            if !(a.is_finite() && *a > 0.0) {
                errs.push(ModelError::InvalidRevenue(format!(
                    "quadratic a must be > 0, got {a}"
                )));
            }
            if !b.is_finite() {
                errs.push(ModelError::InvalidRevenue(
                    "quadratic b must be finite".into(),
                ));
            }
        }
        RevenueFamily::Power { gamma } => {
            if !(*gamma > 0.0 && *gamma < 1.0) {
                errs.push(ModelError::InvalidRevenue(format!(
                    "power gamma must lie in (0, 1), got {gamma}"
                )));
            }
        }
        RevenueFamily::Log => {}
        RevenueFamily::Custom { .. } => {
            let l = rev.lipschitz_rprime();
            if !(l.is_finite() && l >= 0.0) {
                errs.push(ModelError::InvalidRevenue(format!(
                    "custom revenue needs a finite Lipschitz constant for R', got {l}"
                )));
            }
        }
    }
    if errs.is_empty() && rev.is_concave() {
        let (lo, hi) = CONCAVITY_RANGE;
        let step = (hi - lo) / (CONCAVITY_PROBES - 1) as f64;
        let mut prev = rev.prime(lo);
        for i in 1..CONCAVITY_PROBES {
            let q = lo + i as f64 * step;
            let d = rev.prime(q);
            if d > prev + 1e-12 * (1.0 + prev.abs()) {
                errs.push(ModelError::NonConcaveRevenue { at: q });
                break;
            }
            prev = d;
        }
    }
    errs
}
