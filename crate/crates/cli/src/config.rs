//! Run configuration: one JSON document per run.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use vintage_eq_core::model::DEFAULT_BETA_FLOOR;
use vintage_eq_core::{Grid, GridFunction, ModelParams, RevenueSpec};

use crate::CliError;

pub const DEFAULT_N_CELLS: usize = 200;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub n_cells: Option<usize>,
    pub simulate: Option<SimulateConfig>,
    pub sweep: Option<SweepConfig>,
    pub oracle: Option<OracleConfig>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("invalid config: {e}")))
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells.unwrap_or(DEFAULT_N_CELLS)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        self.model.build(self.n_cells(), &[])
    }
}

/// Grid function given as `"const c"`, `"linear a b"` (`a + b s`),
/// `"samples [v0, ..., vm]"`, a bare number or a bare array. Samples sit on
/// `m + 1` equispaced points of `[0, s_bar]` and are linearly interpolated.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Number(f64),
    Samples(Vec<f64>),
    Text(String),
}

impl FunctionSpec {
    pub fn resolve(&self, grid: Grid, what: &str) -> Result<GridFunction, CliError> {
        let bad = |msg: String| CliError::Input(format!("{what}: {msg}"));
        match self {
            FunctionSpec::Number(c) => Ok(GridFunction::constant(grid, *c)),
            FunctionSpec::Samples(v) => resolve_samples(v, grid).map_err(bad),
            FunctionSpec::Text(text) => {
                let text = text.trim();
                let (tag, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
                let rest = rest.trim();
                let number = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| bad(format!("cannot parse number {s:?} in {text:?}")))
                };
                match tag {
                    "const" => Ok(GridFunction::constant(grid, number(rest)?)),
                    "linear" => {
                        let parts: Vec<&str> = rest.split_whitespace().collect();
                        if parts.len() != 2 {
                            return Err(bad(format!("expected \"linear a b\", got {text:?}")));
                        }
                        let (a, b) = (number(parts[0])?, number(parts[1])?);
                        Ok(GridFunction::from_fn(grid, |s| a + b * s))
                    }
                    "samples" => {
                        let v: Vec<f64> = serde_json::from_str(rest)
                            .map_err(|e| bad(format!("cannot parse samples: {e}")))?;
                        resolve_samples(&v, grid).map_err(bad)
                    }
                    _ => Err(bad(format!("unknown function form {text:?}"))),
                }
            }
        }
    }
}

fn resolve_samples(values: &[f64], grid: Grid) -> Result<GridFunction, String> {
    if values.len() < 2 {
        return Err(format!("need at least 2 samples, got {}", values.len()));
    }
    let source = Grid::new(grid.s_bar, values.len() - 1).map_err(|e| e.to_string())?;
    let f = GridFunction::new(source, values.to_vec()).map_err(|e| e.to_string())?;
    Ok(f.resample(grid))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RevenueConfig {
    Quadratic { a: f64, b: f64 },
    Log,
    Power { gamma: f64 },
    Linear { b: f64 },
}

impl RevenueConfig {
    fn spec(&self) -> RevenueSpec {
        match *self {
            RevenueConfig::Quadratic { a, b } => RevenueSpec::quadratic(a, b),
            RevenueConfig::Log => RevenueSpec::log(),
            RevenueConfig::Power { gamma } => RevenueSpec::power(gamma),
            RevenueConfig::Linear { b } => RevenueSpec::linear(b),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mu: f64,
    pub lambda: f64,
    pub s_bar: f64,
    pub alpha: FunctionSpec,
    pub beta0: f64,
    pub beta1: FunctionSpec,
    #[serde(default)]
    pub q0: f64,
    #[serde(default = "zero_function")]
    pub q1: FunctionSpec,
    pub revenue: RevenueConfig,
    pub beta_floor: Option<f64>,
}

fn zero_function() -> FunctionSpec {
    FunctionSpec::Number(0.0)
}

/// Scalar parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Lambda,
    Mu,
    SBar,
    Beta0,
    Q0,
    A,
    B,
    Gamma,
}

impl SweepParameter {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        Ok(match name {
            "lambda" => Self::Lambda,
            "mu" => Self::Mu,
            "s_bar" => Self::SBar,
            "beta0" => Self::Beta0,
            "q0" => Self::Q0,
            "a" => Self::A,
            "b" => Self::B,
            "gamma" => Self::Gamma,
            _ => {
                return Err(CliError::Input(format!(
                    "unknown sweep parameter {name:?} (expected lambda, mu, s_bar, beta0, q0, a, b or gamma)"
                )))
            }
        })
    }
}

impl ModelConfig {
    /// Resolves the model on an `n_cells` grid, applying scalar overrides,
    /// and validates it.
    pub fn build(
        &self,
        n_cells: usize,
        overrides: &[(SweepParameter, f64)],
    ) -> Result<ModelParams, CliError> {
        let mut cfg = self.clone();
        for &(param, value) in overrides {
            cfg.set(param, value)?;
        }
        let grid = Grid::new(cfg.s_bar, n_cells).map_err(CliError::from)?;
        let params = ModelParams {
            mu: cfg.mu,
            lambda: cfg.lambda,
            s_bar: cfg.s_bar,
            alpha: cfg.alpha.resolve(grid, "alpha")?,
            beta0: cfg.beta0,
            beta1: cfg.beta1.resolve(grid, "beta1")?,
            q0: cfg.q0,
            q1: cfg.q1.resolve(grid, "q1")?,
            revenue: cfg.revenue.spec(),
            beta_floor: cfg.beta_floor.unwrap_or(DEFAULT_BETA_FLOOR),
        };
        Ok(params.validate()?)
    }

    fn set(&mut self, param: SweepParameter, value: f64) -> Result<(), CliError> {
        let family_mismatch = |name: &str, family: &str| {
            Err(CliError::Input(format!(
                "sweep parameter {name} needs {family} revenue"
            )))
        };
        match param {
            SweepParameter::Lambda => self.lambda = value,
            SweepParameter::Mu => self.mu = value,
            SweepParameter::SBar => self.s_bar = value,
            SweepParameter::Beta0 => self.beta0 = value,
            SweepParameter::Q0 => self.q0 = value,
            SweepParameter::A => match &mut self.revenue {
                RevenueConfig::Quadratic { a, .. } => *a = value,
                _ => return family_mismatch("a", "quadratic"),
            },
            SweepParameter::B => match &mut self.revenue {
                RevenueConfig::Quadratic { b, .. } | RevenueConfig::Linear { b } => *b = value,
                _ => return family_mismatch("b", "quadratic or linear"),
            },
            SweepParameter::Gamma => match &mut self.revenue {
                RevenueConfig::Power { gamma } => *gamma = value,
                _ => return family_mismatch("gamma", "power"),
            },
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub horizon: f64,
    pub policy: Option<PolicyConfig>,
    /// Initial profile; `"equilibrium"` starts from `x_bar`. Defaults to
    /// `x_bar` under equilibrium feedback and to zero otherwise.
    pub initial: Option<FunctionSpec>,
    /// Also write every snapshot to `snapshots.csv`.
    #[serde(default)]
    pub profiles: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Zero,
    Constant {
        #[serde(default)]
        u0: f64,
        #[serde(default = "zero_function")]
        u1: FunctionSpec,
    },
    EquilibriumFeedback,
    TimeTable {
        entries: Vec<ControlConfig>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub u0: f64,
    #[serde(default = "zero_function")]
    pub u1: FunctionSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub count: usize,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

fn default_true() -> bool {
    true
}

impl SweepConfig {
    /// Equispaced values from `from` to `to`, both included.
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.count == 0 {
            return Err(CliError::Input("sweep range is empty (count = 0)".into()));
        }
        if !self.from.is_finite() || !self.to.is_finite() {
            return Err(CliError::Input("sweep bounds must be finite".into()));
        }
        if self.count == 1 {
            return Ok(vec![self.from]);
        }
        let m = (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.to
                } else {
                    self.from + (self.to - self.from) * i as f64 / m
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub resolutions: Vec<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_x0")]
    pub x0: FunctionSpec,
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    10_000
}

fn default_x0() -> FunctionSpec {
    FunctionSpec::Text("const 1".into())
}

impl OracleConfig {
    pub fn check(&self) -> Result<(), CliError> {
        if self.resolutions.is_empty() {
            return Err(CliError::Input("oracle resolutions are empty".into()));
        }
        if self.resolutions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Input(
                "oracle resolutions must be strictly ascending".into(),
            ));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(CliError::Input(format!(
                "oracle tol must be > 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL_A: &str = r#"{
        "model": {
            "mu": 1, "lambda": 1, "s_bar": 1,
            "alpha": "const 1", "beta0": 0.5, "beta1": "const 0.5",
            "revenue": {"family": "quadratic", "a": 0.5, "b": 1}
        },
        "n_cells": 10
    }"#;

    #[test]
    fn function_forms() {
        let g = Grid::new(2.0, 4).unwrap();
        let f = |j: &str| {
            serde_json::from_str::<FunctionSpec>(j)
                .unwrap()
                .resolve(g, "f")
                .unwrap()
        };
        assert_eq!(f(r#""const 0.5""#).values(), &[0.5; 5]);
        assert_eq!(f("3").values(), &[3.0; 5]);
        assert_eq!(
            f(r#""linear 1 -0.5""#).values(),
            &[1.0, 0.75, 0.5, 0.25, 0.0]
        );
        assert_eq!(
            f(r#""samples [0, 2, 4]""#).values(),
            &[0.0, 1.0, 2.0, 3.0, 4.0]
        );
        assert_eq!(f("[1, 1, 1]").values(), &[1.0; 5]);
    }

    #[test]
    fn malformed_functions_are_input_errors() {
        let g = Grid::new(1.0, 4).unwrap();
        for bad in [
            r#""const""#,
            r#""linear 1""#,
            r#""cubic 1 2 3""#,
            r#""samples [1]""#,
            "[]",
        ] {
            let spec: FunctionSpec = serde_json::from_str(bad).unwrap();
            assert!(
                matches!(spec.resolve(g, "f"), Err(CliError::Input(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn model_a_resolves() {
        let cfg = RunConfig::from_json(MODEL_A).unwrap();
        let p = cfg.params().unwrap();
        assert_eq!(p.grid().n_cells, 10);
        assert_eq!(p.q1.max_abs(), 0.0);
        assert_eq!(p.revenue.prime(0.0), 1.0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MODEL_A.replace("\"n_cells\": 10", "\"n_cels\": 10");
        assert!(matches!(
            RunConfig::from_json(&text),
            Err(CliError::Input(_))
        ));
    }

    #[test]
    fn overrides_respect_family() {
        let cfg = RunConfig::from_json(MODEL_A).unwrap();
        let p = cfg
            .model
            .build(
                10,
                &[(SweepParameter::Lambda, 2.0), (SweepParameter::A, 1.0)],
            )
            .unwrap();
        assert_eq!(p.lambda, 2.0);
        assert_eq!(p.revenue.lipschitz_rprime(), 2.0);
        assert!(cfg
            .model
            .build(10, &[(SweepParameter::Gamma, 0.5)])
            .is_err());
        assert!(SweepParameter::parse("kappa").is_err());
    }

    #[test]
    fn sweep_values_include_both_ends() {
        let s = SweepConfig {
            parameter: "lambda".into(),
            from: 0.5,
            to: 2.0,
            count: 4,
            parallel: true,
        };
        assert_eq!(s.values().unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
        let empty = SweepConfig { count: 0, ..s };
        assert!(empty.values().is_err());
    }
}
