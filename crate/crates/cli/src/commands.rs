use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};
use vintage_eq_core::conditions::{
    alpha_v_norm_sq, check_contraction, check_quadratic_variant, ConditionReport,
};
use vintage_eq_core::error::Error;
use vintage_eq_core::oracle::{self, picard_fixed_point};
use vintage_eq_core::pde_sim::{profit, simulate_with, ControlPolicy};
use vintage_eq_core::{assemble, ControlPair, EquilibriumResult, GridFunction, ModelParams};

use crate::config::{FunctionSpec, PolicyConfig, RunConfig, SweepParameter};
use crate::output::{write_csv, write_json, Cell};
use crate::CliError;

const NOT_NECESSARY_NOTE: &str =
    "condition not necessary: Picard iteration converged although no contraction condition holds";

/// Contraction report, or `None` when the output weight is outside `V`.
fn contraction(params: &ModelParams) -> Result<Option<ConditionReport>, CliError> {
    match check_contraction(params) {
        Ok(r) => Ok(Some(r)),
        Err(Error::AlphaNotInV { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn condition_summary(params: &ModelParams) -> Result<Value, CliError> {
    Ok(match check_contraction(params) {
        Ok(r) => json!({
            "available": true,
            "holds": r.any_holds(),
            "best": r.best,
            "entries": r.entries,
            "note": r.note,
        }),
        Err(e @ Error::AlphaNotInV { .. }) => {
            json!({ "available": false, "reason": e.to_string() })
        }
        Err(e) => return Err(e.into()),
    })
}

/// Solves for the equilibrium; writes `equilibrium.json` and `profiles.csv`.
pub fn cmd_equilibrium(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let params = config.params()?;
    let eq = assemble(&params)?;
    let summary = json!({
        "eta": eq.eta,
        "c1": eq.c1,
        "c2": eq.c2,
        "output": eq.output,
        "u0_star": eq.u_star.u0,
        "residuals": eq.residuals,
        "revenue": params.revenue.family(),
        "n_cells": params.grid().n_cells,
        "conditions": condition_summary(&params)?,
    });
    write_json(&out_dir.join("equilibrium.json"), &summary)?;
    write_profiles(&out_dir.join("profiles.csv"), &params, &eq)
}

fn write_profiles(
    path: &Path,
    params: &ModelParams,
    eq: &EquilibriumResult,
) -> Result<(), CliError> {
    let grid = params.grid();
    let rows = grid.nodes().enumerate().map(|(j, s)| {
        vec![
            Cell::Num(s),
            eq.x_bar.at(j).into(),
            eq.w1.at(j).into(),
            eq.w2.at(j).into(),
            eq.alpha_bar.at(j).into(),
            eq.u_star.u1.at(j).into(),
            eq.p_bar.at(j).into(),
        ]
    });
    write_csv(
        path,
        &["s", "x_bar", "w1", "w2", "alpha_bar", "u1_star", "p_bar"],
        rows,
    )
}

/// Evaluates the sufficient conditions; writes `conditions.json`. Whether a
/// condition holds is data, not failure.
pub fn cmd_check(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let params = config.params()?;
    let report = check_contraction(&params)?;
    let variant = match check_quadratic_variant(&params) {
        Ok(r) => Some(r),
        Err(Error::WrongFamily { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let out = json!({
        "contraction": report,
        "holds": report.any_holds(),
        "quadratic_variant": variant,
        "alpha_v_norm_sq": alpha_v_norm_sq(&params),
    });
    write_json(&out_dir.join("conditions.json"), &out)
}

fn resolve_control(
    u0: f64,
    u1: &FunctionSpec,
    params: &ModelParams,
) -> Result<ControlPair, CliError> {
    Ok(ControlPair::new(
        u0,
        u1.resolve(params.grid(), "control u1")?,
    ))
}

/// Runs the transport simulator; writes `trajectory.csv`, `summary.json` and,
/// when requested, `snapshots.csv`.
pub fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let sim = config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Input("missing simulate block".into()))?;
    let policy_cfg = sim
        .policy
        .as_ref()
        .ok_or_else(|| CliError::Input("missing simulate.policy block".into()))?;
    let params = config.params()?;
    let grid = params.grid();

    let feedback = matches!(policy_cfg, PolicyConfig::EquilibriumFeedback);
    let wants_eq =
        |spec: &FunctionSpec| matches!(spec, FunctionSpec::Text(t) if t.trim() == "equilibrium");
    let needs_eq = feedback || sim.initial.as_ref().is_some_and(wants_eq);
    let eq = if needs_eq {
        Some(assemble(&params)?)
    } else {
        None
    };

    let (policy, mode) = match policy_cfg {
        PolicyConfig::Zero => (
            ControlPolicy::OpenLoopConstant(ControlPair::zeros(grid)),
            "zero",
        ),
        PolicyConfig::Constant { u0, u1 } => (
            ControlPolicy::OpenLoopConstant(resolve_control(*u0, u1, &params)?),
            "constant",
        ),
        PolicyConfig::EquilibriumFeedback => (
            ControlPolicy::StationaryEquilibriumFeedback(Box::new(
                eq.clone().expect("computed above"),
            )),
            "equilibrium_feedback",
        ),
        PolicyConfig::TimeTable { entries } => {
            let table = entries
                .iter()
                .map(|c| resolve_control(c.u0, &c.u1, &params))
                .collect::<Result<Vec<_>, _>>()?;
            (ControlPolicy::OpenLoopTimeTable(table), "time_table")
        }
    };

    let x0 = match (&sim.initial, &eq) {
        (Some(spec), Some(eq)) if wants_eq(spec) => eq.x_bar.clone(),
        (Some(spec), _) => spec.resolve(grid, "initial")?,
        (None, Some(eq)) if feedback => eq.x_bar.clone(),
        (None, _) => GridFunction::zeros(grid),
    };
    let reference = if feedback {
        eq.as_ref().map(|e| &e.x_bar)
    } else {
        None
    };
    let traj = simulate_with(&x0, &policy, sim.horizon, &params, sim.profiles, reference)?;
    let report = profit(&traj, &params);

    let rows = (0..traj.times.len()).map(|k| {
        vec![
            Cell::Num(traj.times[k]),
            traj.output[k].into(),
            traj.profit_to_date[k].into(),
            traj.discounted_payoff[k].into(),
        ]
    });
    write_csv(
        &out_dir.join("trajectory.csv"),
        &["tau", "Q", "profit_to_date", "discounted_payoff"],
        rows,
    )?;
    if sim.profiles {
        let rows = traj.snapshots.iter().zip(&traj.times).flat_map(|(y, &t)| {
            grid.nodes()
                .enumerate()
                .map(move |(j, s)| vec![Cell::Num(t), Cell::Num(s), y.at(j).into()])
        });
        write_csv(&out_dir.join("snapshots.csv"), &["tau", "s", "y"], rows)?;
    }
    let summary = json!({
        "policy": mode,
        "horizon": sim.horizon,
        "dt": traj.dt,
        "steps": traj.times.len() - 1,
        "final_output": traj.output.last(),
        "profit": report.profit,
        "tail_bound": report.tail_bound,
        "max_drift": traj.max_drift,
    });
    write_json(&out_dir.join("summary.json"), &summary)
}

struct SweepRow {
    value: f64,
    eq: EquilibriumResult,
    conditions: Option<ConditionReport>,
}

fn sweep_point(
    config: &RunConfig,
    param: SweepParameter,
    value: f64,
) -> Result<SweepRow, CliError> {
    let params = config.model.build(config.n_cells(), &[(param, value)])?;
    let eq = assemble(&params)?;
    Ok(SweepRow {
        value,
        eq,
        conditions: contraction(&params)?,
    })
}

/// Comparative statics over one scalar parameter; writes `sweep.csv` with one
/// row per value, in sweep order whether or not points run concurrently.
pub fn cmd_sweep(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Input("missing sweep block".into()))?;
    let param = SweepParameter::parse(&sweep.parameter)?;
    let values = sweep.values()?;
    let results: Vec<Result<SweepRow, CliError>> = if sweep.parallel {
        values
            .par_iter()
            .map(|&v| sweep_point(config, param, v))
            .collect()
    } else {
        values
            .iter()
            .map(|&v| sweep_point(config, param, v))
            .collect()
    };
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let entry =
        |r: &SweepRow, name: &str| r.conditions.as_ref().and_then(|c| c.entry(name).cloned());
    let header = [
        sweep.parameter.as_str(),
        "eta",
        "c1",
        "c2",
        "output",
        "growth_margin",
        "growth_holds",
        "length_margin",
        "length_holds",
    ];
    let csv_rows = rows.iter().map(|r| {
        let growth = entry(r, "growth_bound");
        let length = entry(r, "length_bound");
        vec![
            Cell::Num(r.value),
            r.eq.eta.into(),
            r.eq.c1.into(),
            r.eq.c2.into(),
            r.eq.output.into(),
            growth.as_ref().map(|e| e.margin).into(),
            growth.as_ref().map(|e| e.holds).into(),
            length.as_ref().map(|e| e.margin).into(),
            length.as_ref().map(|e| e.holds).into(),
        ]
    });
    write_csv(&out_dir.join("sweep.csv"), &header, csv_rows)
}

/// Compares the closed-form equilibrium with Picard iteration on the dense
/// oracle at every configured resolution; writes `oracle.json`.
pub fn cmd_oracle(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let oc = config
        .oracle
        .as_ref()
        .ok_or_else(|| CliError::Input("missing oracle block".into()))?;
    oc.check()?;
    let mut runs = Vec::new();
    let mut fixed_points: Vec<GridFunction> = Vec::new();
    for &n in &oc.resolutions {
        let params = config.model.build(n, &[])?;
        let eq = assemble(&params)?;
        let ops = oracle::build(&params, n)?;
        let x0 = oc.x0.resolve(params.grid(), "oracle x0")?;
        let outcome = picard_fixed_point(&ops, &params, &x0, oc.tol, oc.max_iter)?;
        if !outcome.converged {
            let tail = outcome.step_norms[outcome.step_norms.len().saturating_sub(10)..].to_vec();
            return Err(Error::NoConvergence {
                iterations: outcome.step_norms.len(),
                last_steps: tail,
            }
            .into());
        }
        let distance = outcome.x.sub(&eq.x_bar)?.l2_norm();
        let conditions = contraction(&params)?;
        let holds = conditions.as_ref().map(|c| c.any_holds());
        let predicted_rate = conditions.as_ref().map(|c| {
            let best = c.best_entry();
            best.rhs / best.lhs
        });
        runs.push(json!({
            "n_cells": n,
            "iterations": outcome.iterations,
            "fitted_rate": outcome.fitted_rate,
            "predicted_rate_bound": predicted_rate,
            "contraction_holds": holds,
            "note": if holds == Some(true) { None } else { Some(NOT_NECESSARY_NOTE) },
            "distance_l2": distance,
            "relative_distance": distance / (1.0 + eq.x_bar.l2_norm()),
            "eta_closed_form": eq.eta,
            "eta_oracle": params.revenue.prime(ops.output(&outcome.x)),
            "weak_form_residual_closed_form": ops.residual_weak_form(&eq.x_bar, &eq.u_star, &params),
        }));
        fixed_points.push(outcome.x);
    }
    let (differences, orders) = convergence_orders(&fixed_points, &oc.resolutions);
    let out = json!({
        "resolutions": runs,
        "successive_differences": differences,
        "convergence_orders": orders,
        "convergence_order": orders.last().copied().flatten(),
    });
    write_json(&out_dir.join("oracle.json"), &out)
}

/// `d_i = |x_{i+1} - x_i|` on the coarsest grid and the observed orders
/// `ln(d_i / d_{i+1}) / ln(n_{i+1} / n_i)`.
pub fn convergence_orders(xs: &[GridFunction], ns: &[usize]) -> (Vec<f64>, Vec<Option<f64>>) {
    let Some(coarse) = xs.first().map(|x| x.grid()) else {
        return (Vec::new(), Vec::new());
    };
    let on_coarse: Vec<GridFunction> = xs.iter().map(|x| x.resample(coarse)).collect();
    let diffs: Vec<f64> = on_coarse
        .windows(2)
        .map(|w| w[1].sub(&w[0]).expect("same grid").l2_norm())
        .collect();
    let orders = diffs
        .windows(2)
        .enumerate()
        .map(|(i, d)| {
            let ratio = ns[i + 2] as f64 / ns[i + 1] as f64;
            (d[0] > 0.0 && d[1] > 0.0).then(|| (d[0] / d[1]).ln() / ratio.ln())
        })
        .collect();
    (diffs, orders)
}
