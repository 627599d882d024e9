//! Equilibrium points of the infinite-horizon optimal investment problem with
//! vintage (age-structured) capital.
//!
//! Capital of age `s in [0, s_bar]` depreciates at rate `mu`, is fed by new
//! investment `u0` at age zero and by investment `u1(s)` in existing vintages,
//! and produces output `Q = <alpha, y>` sold with revenue `R(Q)`. With the
//! quadratic-linear investment cost, equilibria reduce to a scalar equation.
//!
//! - [`operators`]: kernel realizations of the state-space operators.
//! - [`equilibrium`]: `w1`, `w2`, the scalar equation and the assembled equilibrium.
//! - [`conditions`]: sufficient contraction conditions for uniqueness.
//! - [`oracle`]: dense-matrix Picard iteration used as an independent check.
//! - [`pde_sim`]: transport simulator along characteristics.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod model;
pub mod operators;
pub mod oracle;
pub mod pde_sim;
pub mod presets;

pub use equilibrium::{assemble, EquilibriumResult};
pub use error::Error;
pub use grid::{Grid, GridFunction};
pub use model::{ModelParams, RevenueFamily, RevenueSpec};
pub use operators::ControlPair;
