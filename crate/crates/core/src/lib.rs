//! Numerical lab for hybrid passive/active knee compliance under
//! sensorimotor delay.

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod leg;
pub mod metrics;
pub mod model;
pub mod pendulum;
pub mod poly;
pub mod quadruped;
pub mod sweep;
pub mod trajectory;

pub use controller::{ControlSchedule, DelayLine, DelayedController, Hold};
pub use error::{Error, Result};
pub use leg::{run_drop, ContactMode, ContactModel, DropConfig, LegState, SpringMode};
pub use metrics::{
    settle_metrics, trajectory_mse, FailureReason, LandingVerdict, VerdictThresholds,
};
pub use model::{
    biological_delay, rotational_from_linear, split_stiffness, BodyParams, ComplianceSplit,
    LegGeometry,
};
pub use pendulum::{PendulumParams, PoleSet, StepClass, StepResponse};
pub use poly::Polynomial;
pub use quadruped::{
    bundled_case, bundled_cases, run_quadruped_case, run_quadruped_table, Outcome, QuadrupedCase,
    QuadrupedConfig, QuadrupedRun,
};
pub use sweep::{
    emit_map, run_sweep, run_sweep_with, Cell, CellResult, SweepGrid, SweepSummary, ViabilityMap,
};
pub use trajectory::{SimStatus, Trajectory};
