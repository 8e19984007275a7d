//! Planar drop-landing dynamics of the two-segment leg on a vertical rail.
//!
//! The body mass is lumped at the hip and the leg segments are massless.
//! In flight the hip falls ballistically while a slow servo holds the knee
//! at its rest angle. In stance the foot is pinned, so the hip height
//! `z = 2L·cos(θ/2)` is the single coordinate; the knee torque reaches the
//! body through the leg Jacobian `dz/dθ`:
//!
//! ```text
//! M z̈ = n_legs · τ_knee / (dz/dθ) − M g
//! τ_knee = τ_spring(θ) + τ_motor − b·θ̇
//! ```
//!
//! The hip height is integrated with velocity Verlet in both phases, which
//! keeps the ballistic phase exact and the conservative stance energy
//! error second order in the step size.

use serde::{Deserialize, Serialize};

use crate::controller::{ControlSchedule, DelayedController};
use crate::error::{ensure_positive, Error, Result};
use crate::model::{BodyParams, ComplianceSplit, LegGeometry};
use crate::trajectory::{Sample, SimStatus, Trajectory};

/// Below this knee angle the leg counts as fully extended and leaves the ground.
const FULL_EXTENSION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpringMode {
    /// Extension spring: pushes only while the knee is flexed past rest.
    #[default]
    OneDirectional,
    /// Acts in both directions around the rest angle.
    Linear,
}

/// Compliant ground: a unilateral spring-damper on foot penetration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactModel {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    /// Integration sub-steps per physics step.
    #[serde(default = "default_substeps")]
    pub substeps: u32,
}

fn default_substeps() -> u32 {
    20
}

impl Default for ContactModel {
    fn default() -> Self {
        Self {
            stiffness: 5e4,
            damping: 50.0,
            substeps: default_substeps(),
        }
    }
}

impl ContactModel {
    /// Normal force for a penetration depth and rate; never pulls.
    pub fn normal_force(&self, penetration: f64, penetration_rate: f64) -> f64 {
        if penetration <= 0.0 {
            return 0.0;
        }
        (self.stiffness * penetration + self.damping * penetration_rate).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ContactMode {
    /// Foot pinned from touch-down until the leg would pull on the ground.
    #[default]
    Pinned,
    Penalty(ContactModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropConfig {
    /// Hip height at release, m.
    pub drop_height: f64,
    pub geometry: LegGeometry,
    pub body: BodyParams,
    pub split: ComplianceSplit,
    pub schedule: ControlSchedule,
    /// Simulated time, s.
    pub duration: f64,
    pub physics_dt: f64,
    pub spring: SpringMode,
    pub contact: ContactMode,
    /// Identical legs in parallel carrying the body.
    pub legs: u32,
    /// Bandwidth of the flight-phase knee servo, Hz.
    pub flight_servo_hz: f64,
}

impl Default for DropConfig {
    fn default() -> Self {
        Self {
            drop_height: 0.425,
            geometry: LegGeometry::default(),
            body: BodyParams::default(),
            split: ComplianceSplit::reference(1.0).expect("valid"),
            schedule: ControlSchedule::continuous(),
            duration: 3.0,
            physics_dt: 1e-3,
            spring: SpringMode::OneDirectional,
            contact: ContactMode::Pinned,
            legs: 1,
            flight_servo_hz: 2.0,
        }
    }
}

impl DropConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("drop_height", self.drop_height)?;
        self.geometry.validate()?;
        self.body.validate()?;
        self.schedule.validate()?;
        ensure_positive("duration", self.duration)?;
        ensure_positive("physics_dt", self.physics_dt)?;
        ensure_positive("flight_servo_hz", self.flight_servo_hz)?;
        if self.legs == 0 {
            return Err(Error::Config("at least one leg is required".into()));
        }
        if let ContactMode::Penalty(c) = self.contact {
            ensure_positive("contact stiffness", c.stiffness)?;
            crate::error::ensure_non_negative("contact damping", c.damping)?;
            if c.substeps == 0 {
                return Err(Error::Config("contact substeps must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.physics_dt).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegState {
    pub t: f64,
    /// Hip height, m.
    pub z: f64,
    pub zdot: f64,
    /// Knee angle, rad.
    pub theta: f64,
    pub thetadot: f64,
    pub contact: bool,
    /// Foot penetration into the ground (penalty contact only), m.
    pub penetration: f64,
}

impl LegState {
    /// Released at rest from `config.drop_height` with the knee at its rest
    /// angle; starts in stance if the foot would already touch the ground.
    pub fn released(config: &DropConfig) -> Self {
        let geom = &config.geometry;
        let theta_d = geom.rest_knee_angle;
        let mut state = Self {
            t: 0.0,
            z: config.drop_height,
            zdot: 0.0,
            theta: theta_d,
            thetadot: 0.0,
            contact: false,
            penetration: 0.0,
        };
        if config.contact == ContactMode::Pinned && config.drop_height <= geom.rest_height() {
            state.contact = true;
            state.theta = geom.knee_angle_at(config.drop_height);
        }
        state
    }
}

/// Physical knee spring torque. Restoring about `theta_d`; the default
/// one-directional spring is slack while the knee is extended past rest.
pub fn spring_torque(split: &ComplianceSplit, theta: f64, theta_d: f64) -> f64 {
    spring_torque_with(SpringMode::OneDirectional, split, theta, theta_d)
}

pub fn spring_torque_with(
    mode: SpringMode,
    split: &ComplianceSplit,
    theta: f64,
    theta_d: f64,
) -> f64 {
    match mode {
        SpringMode::OneDirectional if theta <= theta_d => 0.0,
        _ => -split.k_passive() * (theta - theta_d),
    }
}

/// Result of one physics step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: LegState,
    /// Ground contact began during this step, at the given time.
    pub touchdown: Option<f64>,
    /// Set when the step ended in a failure state.
    pub failure: Option<SimStatus>,
}

/// Advances `state` by one physics step under the knee motor torque
/// `tau_motor`, which is held over the step.
pub fn step_dynamics(state: &LegState, config: &DropConfig, tau_motor: f64) -> StepOutcome {
    let model = Dynamics::new(config);
    let dt = config.physics_dt;
    let mut outcome = match config.contact {
        ContactMode::Pinned => model.step_pinned(state, tau_motor, dt),
        ContactMode::Penalty(contact) => model.step_penalty(state, tau_motor, dt, &contact),
    };
    let s = &outcome.state;
    let finite = [s.z, s.zdot, s.theta, s.thetadot]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        outcome.failure = Some(SimStatus::Diverged { t: s.t });
    } else if outcome.failure.is_none() && (s.z <= 0.0 || s.theta >= std::f64::consts::PI) {
        outcome.failure = Some(SimStatus::Inverted { t: s.t });
    }
    outcome
}

struct Dynamics<'a> {
    config: &'a DropConfig,
    geom: &'a LegGeometry,
    theta_d: f64,
    damping: f64,
    legs: f64,
    mass: f64,
    gravity: f64,
    servo_rate: f64,
}

impl<'a> Dynamics<'a> {
    fn new(config: &'a DropConfig) -> Self {
        Self {
            config,
            geom: &config.geometry,
            theta_d: config.geometry.rest_knee_angle,
            damping: config.body.knee_equivalent_damping(),
            legs: f64::from(config.legs),
            mass: config.body.mass,
            gravity: config.body.gravity,
            servo_rate: 2.0 * std::f64::consts::PI * config.flight_servo_hz,
        }
    }

    fn spring(&self, theta: f64) -> f64 {
        spring_torque_with(self.config.spring, &self.config.split, theta, self.theta_d)
    }

    /// Knee angle, knee rate and total vertical leg force for a pinned foot.
    fn pinned_force(&self, z: f64, zdot: f64, tau_motor: f64) -> (f64, f64, f64) {
        let theta = self.geom.knee_angle_at(z).max(FULL_EXTENSION);
        let slope = self.geom.height_slope(theta);
        let thetadot = zdot / slope;
        let tau = self.spring(theta) + tau_motor - self.damping * thetadot;
        (theta, thetadot, self.legs * tau / slope)
    }

    fn pinned_accel(&self, z: f64, zdot: f64, tau_motor: f64) -> f64 {
        self.pinned_force(z, zdot, tau_motor).2 / self.mass - self.gravity
    }

    fn servo_step(&self, theta: f64, thetadot: f64, h: f64) -> (f64, f64) {
        let w = self.servo_rate;
        let acc = w * w * (self.theta_d - theta) - 2.0 * w * thetadot;
        let thetadot = thetadot + acc * h;
        (theta + thetadot * h, thetadot)
    }

    fn step_pinned(&self, s: &LegState, tau_motor: f64, dt: f64) -> StepOutcome {
        let t_end = s.t + dt;
        if s.contact {
            let state = self.stance(s.z, s.zdot, tau_motor, dt, t_end);
            return StepOutcome {
                state,
                touchdown: None,
                failure: None,
            };
        }

        let g = self.gravity;
        let z1 = s.z + s.zdot * dt - 0.5 * g * dt * dt;
        let zdot1 = s.zdot - g * dt;
        let (theta1, thetadot1) = self.servo_step(s.theta, s.thetadot, dt);
        let foot = z1 - self.geom.height_at(theta1);
        let foot_rate = zdot1 - self.geom.height_slope(theta1) * thetadot1;
        if foot > 0.0 || foot_rate >= 0.0 {
            let state = LegState {
                t: t_end,
                z: z1,
                zdot: zdot1,
                theta: theta1,
                thetadot: thetadot1,
                contact: false,
                penetration: 0.0,
            };
            return StepOutcome {
                state,
                touchdown: None,
                failure: None,
            };
        }

        // Locate the crossing z(s) = h(θ₁) of the ballistic arc.
        let leg = self.geom.height_at(theta1);
        let gap = (s.z - leg).max(0.0);
        let disc = (s.zdot * s.zdot + 2.0 * g * gap).max(0.0);
        let hit = ((s.zdot + disc.sqrt()) / g).clamp(0.0, dt);
        let zdot_hit = s.zdot - g * hit;
        let state = self.stance(leg, zdot_hit, tau_motor, dt - hit, t_end);
        StepOutcome {
            state,
            touchdown: Some(s.t + hit),
            failure: None,
        }
    }

    /// Velocity-Verlet stance step of length `h` ending at `t_end`.
    fn stance(&self, z: f64, zdot: f64, tau_motor: f64, h: f64, t_end: f64) -> LegState {
        let (z1, zdot1) = if h > 0.0 {
            let a0 = self.pinned_accel(z, zdot, tau_motor);
            let half = zdot + 0.5 * h * a0;
            let z1 = z + h * half;
            let a1 = self.pinned_accel(z1, half, tau_motor);
            (z1, half + 0.5 * h * a1)
        } else {
            (z, zdot)
        };
        let raw_theta = self.geom.knee_angle_at(z1);
        let (theta, thetadot, force) = self.pinned_force(z1, zdot1, tau_motor);
        let unloaded = force < 0.0 || (force == 0.0 && zdot1 > 0.0);
        let extended = raw_theta < FULL_EXTENSION;
        LegState {
            t: t_end,
            z: z1,
            zdot: zdot1,
            theta,
            thetadot: if extended { 0.0 } else { thetadot },
            contact: !(unloaded || extended),
            penetration: 0.0,
        }
    }

    fn step_penalty(
        &self,
        s: &LegState,
        tau_motor: f64,
        dt: f64,
        contact: &ContactModel,
    ) -> StepOutcome {
        let n = contact.substeps.max(1);
        let h = dt / f64::from(n);
        let mut st = *s;
        let mut touchdown = None;
        for k in 0..n {
            let slope = self.geom.height_slope(st.theta.max(FULL_EXTENSION));
            let penetration = self.geom.height_at(st.theta) - st.z;
            let mut force = 0.0;
            let mut thetadot = None;
            if penetration > 0.0 {
                // Massless leg: knee torque balances the ground force, which
                // fixes the knee rate.
                let drive = self.spring(st.theta) + tau_motor;
                let num =
                    contact.stiffness * penetration - contact.damping * st.zdot - drive / slope;
                let den = -self.damping / slope - contact.damping * slope;
                let rate = num / den;
                let f =
                    contact.stiffness * penetration + contact.damping * (slope * rate - st.zdot);
                if f > 0.0 {
                    force = f;
                    thetadot = Some(rate);
                }
            }
            let in_contact = thetadot.is_some();
            if in_contact && !st.contact && touchdown.is_none() {
                touchdown = Some(s.t + k as f64 * h);
            }
            let acc = self.legs * force / self.mass - self.gravity;
            st.zdot += acc * h;
            st.z += st.zdot * h;
            match thetadot {
                Some(rate) => {
                    st.thetadot = rate;
                    st.theta += rate * h;
                }
                None => {
                    let (th, thd) = self.servo_step(st.theta, st.thetadot, h);
                    st.theta = th;
                    st.thetadot = thd;
                }
            }
            st.contact = in_contact;
            st.penetration = penetration.max(0.0);
        }
        st.t = s.t + dt;
        StepOutcome {
            state: st,
            touchdown,
            failure: None,
        }
    }
}

/// Mechanical energy of the body plus the stored spring energy of all legs
/// in contact.
pub fn mechanical_energy(state: &LegState, config: &DropConfig) -> f64 {
    let body = &config.body;
    let kinetic = 0.5 * body.mass * state.zdot * state.zdot;
    let potential = body.mass * body.gravity * state.z;
    let spring = if state.contact {
        let dev = state.theta - config.geometry.rest_knee_angle;
        let stretched = match config.spring {
            SpringMode::OneDirectional => dev.max(0.0),
            SpringMode::Linear => dev,
        };
        0.5 * f64::from(config.legs) * config.split.k_passive() * stretched * stretched
    } else {
        0.0
    };
    kinetic + potential + spring
}

/// Full drop from release to `config.duration`, sampled at the physics rate.
///
/// Each sample holds the state at `t` together with the motor command
/// applied from `t` onward and the spring torque at `t`.
pub fn run_drop(config: &DropConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut controller = DelayedController::new(
        config.schedule,
        config.split,
        config.geometry.rest_knee_angle,
        config.physics_dt,
    )?;
    let steps = config.steps();
    let mut state = LegState::released(config);
    let mut traj = Trajectory {
        samples: Vec::with_capacity(steps as usize + 1),
        drop_height: config.drop_height,
        touchdown: state.contact.then_some(0.0),
        status: SimStatus::Completed,
    };
    let theta_d = config.geometry.rest_knee_angle;

    for n in 0..=steps {
        let tau_motor = controller.step(n, state.theta)?;
        traj.samples.push(Sample {
            t: state.t,
            z: state.z,
            zdot: state.zdot,
            theta: state.theta,
            thetadot: state.thetadot,
            tau_motor,
            tau_spring: spring_torque_with(config.spring, &config.split, state.theta, theta_d),
            contact: state.contact,
        });
        if n == steps {
            break;
        }
        let outcome = step_dynamics(&state, config, tau_motor);
        if traj.touchdown.is_none() {
            traj.touchdown = outcome.touchdown;
        }
        state = outcome.state;
        // Keep the time grid exact.
        state.t = (n + 1) as f64 * config.physics_dt;
        if let Some(failure) = outcome.failure {
            traj.status = failure;
            break;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn config(lambda: f64) -> DropConfig {
        DropConfig {
            split: ComplianceSplit::reference(lambda).unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn spring_examples() {
        let sp = ComplianceSplit::new(1.6717, 0.0).unwrap();
        assert_eq!(spring_torque(&sp, 1.2, 0.434), 0.0);
        let sp = ComplianceSplit::new(1.6717, 0.7).unwrap();
        assert_eq!(spring_torque(&sp, 0.434, 0.434), 0.0);
        let tau = spring_torque(&sp, 0.634, 0.434);
        assert_abs_diff_eq!(tau, -0.234038, epsilon = 1e-6);
        // One-directional: slack when extended past rest.
        assert_eq!(spring_torque(&sp, 0.3, 0.434), 0.0);
        assert!(spring_torque_with(SpringMode::Linear, &sp, 0.3, 0.434) > 0.0);
    }

    #[test]
    fn contact_force_is_unilateral() {
        let c = ContactModel::default();
        assert_eq!(c.normal_force(-0.01, -5.0), 0.0);
        assert_eq!(c.normal_force(0.001, -10.0), 0.0);
        assert!(c.normal_force(0.001, 0.0) > 0.0);
    }

    #[test]
    fn flight_ignores_motor_torque() {
        let cfg = config(0.0);
        let s = LegState::released(&cfg);
        let a = step_dynamics(&s, &cfg, 0.0).state;
        let b = step_dynamics(&s, &cfg, 5.0).state;
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.zdot, -cfg.body.gravity * cfg.physics_dt, epsilon = 1e-15);
    }

    #[test]
    fn stance_state_is_kinematically_consistent() {
        let cfg = config(0.7);
        let traj = run_drop(&cfg).unwrap();
        for s in traj.samples.iter().filter(|s| s.contact) {
            let h = cfg.geometry.height_at(s.theta);
            let dh = cfg.geometry.height_slope(s.theta);
            assert!((s.z - h).abs() < 1e-9);
            assert!((s.zdot - dh * s.thetadot).abs() < 1e-9 * s.zdot.abs().max(1.0));
        }
    }

    #[test]
    fn touchdown_speed_matches_free_fall() {
        let cfg = config(1.0);
        let traj = run_drop(&cfg).unwrap();
        let td = traj.touchdown.expect("lands");
        let fall = cfg.drop_height - cfg.geometry.rest_height();
        let expected_t = (2.0 * fall / cfg.body.gravity).sqrt();
        assert!((td - expected_t).abs() < 1e-9);
        let first = traj.samples.iter().find(|s| s.contact).unwrap();
        // Speed just after contact, corrected for the part of the step spent in stance.
        let v_expected = (2.0 * cfg.body.gravity * fall).sqrt();
        let before = traj
            .samples
            .iter()
            .rev()
            .find(|s| !s.contact && s.t < first.t)
            .unwrap();
        let v_before = before.zdot.abs() + cfg.body.gravity * (td - before.t);
        assert!((v_before - v_expected).abs() / v_expected < 0.01);
    }

    #[test]
    fn deterministic() {
        let cfg = DropConfig {
            schedule: ControlSchedule::new(50.0, 0.5, 0.03).unwrap(),
            ..config(0.3)
        };
        let a = run_drop(&cfg).unwrap();
        let b = run_drop(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn standing_start_begins_in_stance() {
        let cfg = DropConfig {
            drop_height: 0.30,
            ..config(1.0)
        };
        let traj = run_drop(&cfg).unwrap();
        assert_eq!(traj.touchdown, Some(0.0));
        assert!(traj.samples[0].contact);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = DropConfig {
            legs: 0,
            ..config(1.0)
        };
        assert!(run_drop(&cfg).is_err());
        let cfg = DropConfig {
            schedule: ControlSchedule::new(300.0, 1.0, 0.0).unwrap(),
            ..config(1.0)
        };
        assert!(run_drop(&cfg).is_err());
    }

    #[test]
    fn collapse_is_flagged_inverted() {
        // A very soft leg cannot stop the fall.
        let cfg = DropConfig {
            split: ComplianceSplit::new(0.05, 1.0).unwrap(),
            drop_height: 1.0,
            ..Default::default()
        };
        let traj = run_drop(&cfg).unwrap();
        assert!(matches!(traj.status, SimStatus::Inverted { .. }));
    }
}
