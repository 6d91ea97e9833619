//! Real-time-iteration nonlinear MPC for a 12-state quadrotor.
//!
//! The crate is `no_std` (it needs `alloc` for workspaces that are sized once
//! at construction). Every solver buffer is allocated up front; one full
//! control cycle (`prepare`, `feedback`, `shift`) performs no heap traffic.
//!
//! Layout:
//!
//! * [`model`]: quadrotor dynamics, RK4 discretization and the exact
//!   Jacobians of the discrete map.
//! * [`pid`]: cascaded position/attitude PID producing the control reference
//!   and initial guess.
//! * [`qp`]: dense active-set QP solver with warm starts.
//! * [`rti`]: multiple-shooting Gauss-Newton real-time iteration.
//! * [`mixer`]: thrust/torque to motor PWM allocation.
//! * [`trace`] and [`metrics`]: closed-loop records and tracking metrics.
#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod linalg;
pub mod metrics;
pub mod mixer;
pub mod model;
pub mod pid;
pub mod qp;
pub mod rti;
pub mod trace;

pub use metrics::{MetricsError, MetricsReport};
pub use mixer::{Mixer, MixerConfig, PwmCommand};
pub use model::{
    ControlInput, DoubleIntegrator, QuadModel, QuadParams, QuadState, ShootingModel,
    StateJacobians, NU, NX,
};
pub use pid::{CascadedPid, PidGains, ReferencePoint, Target};
pub use qp::{ConstraintStatus, QpProblem, QpSolution, QpSolver, QpStatus, WarmStart};
pub use rti::{ControlBounds, Nmpc, OcpConfig, RtiError, RtiWorkspace, TrajectoryGuess};
pub use trace::{SimTrace, TraceRecord};
