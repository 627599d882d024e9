//! Transport simulator for `y_t + y_s = -mu y + u1`, `y(t, 0) = u0(t)`.
//!
//! The time step equals the grid spacing, so every node value moves exactly
//! one cell along its characteristic per step and only the source integral is
//! approximated (trapezoid along the characteristic). Each node carries a
//! left and a right trace: a mismatch between the initial datum at age zero
//! and the boundary inflow, or a change of `u0` between steps, travels as a
//! jump sitting exactly on a node, and the output integral uses the one-sided
//! values on each cell.

use serde::Serialize;

use crate::equilibrium::EquilibriumResult;
use crate::error::Error;
use crate::grid::GridFunction;
use crate::model::ModelParams;
use crate::operators::{b_star_apply, cost, multiplier_half_beta, ControlPair};

#[derive(Debug, Clone)]
pub enum ControlPolicy {
    OpenLoopConstant(ControlPair),
    /// One control per step; the last entry is reused at the final time.
    OpenLoopTimeTable(Vec<ControlPair>),
    /// `u(y) = M_{1/(2 beta)}(R'(<alpha, y>) B* alpha_bar - q)`, which returns
    /// the equilibrium control at `y = x_bar`.
    StationaryEquilibriumFeedback(Box<EquilibriumResult>),
}

impl ControlPolicy {
    fn control(&self, k: usize, output: f64, params: &ModelParams) -> Result<ControlPair, Error> {
        match self {
            ControlPolicy::OpenLoopConstant(u) => Ok(u.clone()),
            ControlPolicy::OpenLoopTimeTable(table) => Ok(table[k.min(table.len() - 1)].clone()),
            ControlPolicy::StationaryEquilibriumFeedback(eq) => {
                let slope = params.revenue.prime(output);
                let shadow = b_star_apply(&eq.alpha_bar).scale(slope).sub(&params.q())?;
                multiplier_half_beta(&shadow, &params.beta())
            }
        }
    }

    fn check(&self, params: &ModelParams, steps: usize) -> Result<(), Error> {
        let grid = params.grid();
        let mismatch = |what: &str| Err(Error::GridMismatch(what.to_string()));
        match self {
            ControlPolicy::OpenLoopConstant(u) if u.grid() != grid => mismatch("constant control"),
            ControlPolicy::OpenLoopTimeTable(table) => {
                if table.len() < steps.max(1) {
                    return Err(Error::InvalidArgument(format!(
                        "time table has {} entries, horizon needs {}",
                        table.len(),
                        steps.max(1)
                    )));
                }
                if table.iter().any(|u| u.grid() != grid) {
                    return mismatch("time table control");
                }
                Ok(())
            }
            ControlPolicy::StationaryEquilibriumFeedback(eq) if eq.alpha_bar.grid() != grid => {
                mismatch("equilibrium feedback")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// Time step, equal to the grid spacing.
    pub dt: f64,
    pub times: Vec<f64>,
    /// Profiles at every recorded time; empty when snapshots were not kept.
    pub snapshots: Vec<GridFunction>,
    /// `Q(t_k) = <alpha, y(t_k)>`.
    pub output: Vec<f64>,
    /// `e^{-lambda t_k} [R(Q(t_k)) - h0(u(t_k))]`.
    pub discounted_payoff: Vec<f64>,
    /// Trapezoid-in-time integral of the discounted payoff up to `t_k`.
    pub profit_to_date: Vec<f64>,
    /// `max_k |y(t_k) - reference|_2` when a reference profile was supplied.
    pub max_drift: Option<f64>,
    pub final_state: GridFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfitReport {
    pub profit: f64,
    /// `e^{-lambda T} |R(Q(T)) - h0(u(T))| / lambda`.
    pub tail_bound: f64,
}

/// Right and left limits at every node.
#[derive(Debug, Clone)]
struct Traces {
    right: Vec<f64>,
    left: Vec<f64>,
}

impl Traces {
    fn from_profile(y: &GridFunction) -> Self {
        Self {
            right: y.values().to_vec(),
            left: y.values().to_vec(),
        }
    }

    /// Node values: right limits, except at `s_bar` where only the left limit
    /// lies inside the age range.
    fn profile(&self, grid: crate::grid::Grid) -> Result<GridFunction, Error> {
        let mut v = self.right.clone();
        let n = v.len() - 1;
        v[n] = self.left[n];
        GridFunction::new(grid, v)
    }
}

fn advance(traces: &Traces, u: &ControlPair, mu: f64, h: f64) -> Traces {
    let n = traces.right.len() - 1;
    let decay = (-mu * h).exp();
    let u1 = u.u1.values();
    let mut right = vec![0.0; n + 1];
    let mut left = vec![0.0; n + 1];
    right[0] = u.u0;
    left[0] = u.u0;
    for j in 1..=n {
        let source = 0.5 * h * (decay * u1[j - 1] + u1[j]);
        right[j] = decay * traces.right[j - 1] + source;
        let incoming = if j == 1 { u.u0 } else { traces.left[j - 1] };
        left[j] = decay * incoming + source;
    }
    Traces { right, left }
}

fn traced_output(alpha: &GridFunction, traces: &Traces) -> f64 {
    let a = alpha.values();
    let h = alpha.h();
    (1..a.len())
        .map(|j| 0.5 * h * (a[j - 1] * traces.right[j - 1] + a[j] * traces.left[j]))
        .sum()
}

/// One step of length `h` with the control held fixed over the step.
pub fn step(
    y: &GridFunction,
    u: &ControlPair,
    params: &ModelParams,
) -> Result<GridFunction, Error> {
    y.check_same_grid(&u.u1, "step control")?;
    advance(&Traces::from_profile(y), u, params.mu, y.h()).profile(y.grid())
}

fn step_count(horizon: f64, h: f64) -> Result<usize, Error> {
    let ratio = horizon / h;
    let steps = ratio.round();
    if !(horizon >= 0.0) || (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is not a nonnegative multiple of the step {h}"
        )));
    }
    Ok(steps as usize)
}

/// Runs the simulation, keeping every snapshot.
pub fn simulate(
    x0: &GridFunction,
    policy: &ControlPolicy,
    horizon: f64,
    params: &ModelParams,
) -> Result<Trajectory, Error> {
    simulate_with(x0, policy, horizon, params, true, None)
}

/// Runs the simulation; with `keep_snapshots = false` only the series and the
/// final state are stored. When `reference` is given the largest `L^2`
/// distance to it over all recorded times is tracked.
pub fn simulate_with(
    x0: &GridFunction,
    policy: &ControlPolicy,
    horizon: f64,
    params: &ModelParams,
    keep_snapshots: bool,
    reference: Option<&GridFunction>,
) -> Result<Trajectory, Error> {
    let grid = params.grid();
    if x0.grid() != grid {
        return Err(Error::GridMismatch("initial datum".into()));
    }
    if let Some(r) = reference {
        x0.check_same_grid(r, "drift reference")?;
    }
    let h = grid.h();
    let steps = step_count(horizon, h)?;
    policy.check(params, steps)?;

    let beta = params.beta();
    let q = params.q();
    let mut traces = Traces::from_profile(x0);
    let mut state = x0.clone();
    let mut traj = Trajectory {
        dt: h,
        times: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        output: Vec::with_capacity(steps + 1),
        discounted_payoff: Vec::with_capacity(steps + 1),
        profit_to_date: Vec::with_capacity(steps + 1),
        max_drift: reference.map(|_| 0.0),
        final_state: x0.clone(),
    };

    for k in 0..=steps {
        let t = k as f64 * h;
        let output = traced_output(&params.alpha, &traces);
        let u = policy.control(k, output, params)?;
        let payoff =
            (-params.lambda * t).exp() * (params.revenue.value(output) - cost(&u, &beta, &q)?);
        let to_date = match traj.discounted_payoff.last() {
            Some(prev) => traj.profit_to_date.last().unwrap() + 0.5 * h * (prev + payoff),
            None => 0.0,
        };
        traj.times.push(t);
        traj.output.push(output);
        traj.discounted_payoff.push(payoff);
        traj.profit_to_date.push(to_date);
        if let (Some(r), Some(d)) = (reference, traj.max_drift.as_mut()) {
            *d = d.max(state.sub(r)?.l2_norm());
        }
        if k == steps {
            break;
        }
        traces = advance(&traces, &u, params.mu, h);
        let next = traces.profile(grid)?;
        if keep_snapshots {
            traj.snapshots.push(std::mem::replace(&mut state, next));
        } else {
            state = next;
        }
    }
    if keep_snapshots {
        traj.snapshots.push(state.clone());
    }
    traj.final_state = state;
    Ok(traj)
}

/// Truncated discounted profit with its geometric tail estimate.
pub fn profit(traj: &Trajectory, params: &ModelParams) -> ProfitReport {
    // The last payoff already carries the discount factor e^{-lambda T}.
    let last = *traj.discounted_payoff.last().expect("nonempty trajectory");
    ProfitReport {
        profit: *traj.profit_to_date.last().expect("nonempty trajectory"),
        tail_bound: last.abs() / params.lambda,
    }
}
