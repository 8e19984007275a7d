//! Sampled virtual-stiffness controller: update frequency, duty cycle and
//! sensorimotor delay applied to the knee motor command.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, ensure_range, Error, Result};
use crate::model::ComplianceSplit;

/// Default shortest command pulse, s.
pub const DEFAULT_MIN_ACTIVATION: f64 = 1e-3;

/// Tolerance when snapping times onto the control grid.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Hold {
    /// Command held for `duty_cycle · dt_control`, then zero.
    #[default]
    DutyCycle,
    /// Command held for `min_activation` only, then zero.
    MinimumPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    /// Update frequency, Hz.
    pub frequency: f64,
    /// Fraction of the control period with a non-zero command, in (0, 1].
    pub duty_cycle: f64,
    /// Sensorimotor delay, s.
    pub delay: f64,
    #[serde(default = "default_min_activation")]
    pub min_activation: f64,
    #[serde(default)]
    pub hold: Hold,
}

fn default_min_activation() -> f64 {
    DEFAULT_MIN_ACTIVATION
}

impl ControlSchedule {
    pub fn new(frequency: f64, duty_cycle: f64, delay: f64) -> Result<Self> {
        let s = Self {
            frequency,
            duty_cycle,
            delay,
            min_activation: DEFAULT_MIN_ACTIVATION,
            hold: Hold::DutyCycle,
        };
        s.validate()?;
        Ok(s)
    }

    /// 1 kHz, full duty cycle, no delay.
    pub fn continuous() -> Self {
        Self::new(1000.0, 1.0, 0.0).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("frequency", self.frequency)?;
        ensure_range(
            "duty_cycle",
            self.duty_cycle,
            f64::MIN_POSITIVE,
            1.0,
            "must lie in (0, 1]",
        )?;
        ensure_non_negative("delay", self.delay)?;
        ensure_positive("min_activation", self.min_activation)?;
        Ok(())
    }

    pub fn dt_control(&self) -> f64 {
        1.0 / self.frequency
    }

    /// Length of the non-zero part of each control period.
    pub fn dt_activation(&self) -> f64 {
        let period = self.dt_control();
        let raw = match self.hold {
            Hold::DutyCycle => self.duty_cycle * period,
            Hold::MinimumPulse => self.min_activation,
        };
        raw.max(self.min_activation).min(period)
    }
}

impl Default for ControlSchedule {
    fn default() -> Self {
        Self::continuous()
    }
}

/// Time-stamped knee-angle history for delayed feedback.
#[derive(Debug, Clone)]
pub struct DelayLine {
    samples: VecDeque<(f64, f64)>,
    capacity: usize,
}

impl DelayLine {
    pub fn with_capacity(capacity: usize) -> Self {
        let capacity = capacity.max(2);
        Self {
            samples: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Enough room to look `delay` back when sampling every `sample_dt`.
    pub fn for_delay(delay: f64, sample_dt: f64) -> Self {
        Self::with_capacity((delay / sample_dt).ceil() as usize + 2)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn record(&mut self, t: f64, theta: f64) -> Result<()> {
        if let Some(&(last, _)) = self.samples.back() {
            if !(t > last) {
                return Err(Error::NonMonotonicTime { last, got: t });
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((t, theta));
        Ok(())
    }

    /// Linearly interpolated angle at `t`. Times before the oldest sample
    /// return the oldest sample, times after the newest return the newest.
    pub fn query(&self, t: f64) -> Option<f64> {
        let &(t_first, th_first) = self.samples.front()?;
        let &(t_last, th_last) = self.samples.back()?;
        if t <= t_first {
            return Some(th_first);
        }
        if t >= t_last {
            return Some(th_last);
        }
        // First sample strictly after t.
        let hi = self.samples.partition_point(|&(ts, _)| ts <= t);
        let (t0, th0) = self.samples[hi - 1];
        if t == t0 {
            return Some(th0);
        }
        let (t1, th1) = self.samples[hi];
        let w = (t - t0) / (t1 - t0);
        Some(th0 + (th1 - th0) * w)
    }
}

/// Virtual spring torque on the knee: `−K_active·(θ_feedback − θ_d)`.
pub fn motor_torque(split: &ComplianceSplit, theta_feedback: f64, theta_d: f64) -> f64 {
    -split.k_active() * (theta_feedback - theta_d)
}

/// Knee motor command at time `t` as a function of the recorded history.
///
/// At each tick `t_k = k·dt_control` the command is computed from the
/// feedback `θ(t_k − delay)`; it is held for `dt_activation` and is zero
/// for the rest of the period.
pub fn scheduled_torque(
    schedule: &ControlSchedule,
    line: &DelayLine,
    t: f64,
    split: &ComplianceSplit,
    theta_d: f64,
) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let period = schedule.dt_control();
    let k = (t / period + GRID_EPS).floor();
    let tick = k * period;
    if t - tick >= schedule.dt_activation() - GRID_EPS * period {
        return 0.0;
    }
    line.query(tick - schedule.delay)
        .map_or(0.0, |fb| motor_torque(split, fb, theta_d))
}

/// Stateful form of [`scheduled_torque`] driven once per physics step.
///
/// Returns the command averaged over `[t_n, t_n + dt)`, so a pulse that
/// ends inside a physics step contributes its exact impulse.
#[derive(Debug, Clone)]
pub struct DelayedController {
    schedule: ControlSchedule,
    split: ComplianceSplit,
    theta_d: f64,
    line: DelayLine,
    physics_dt: f64,
    period_steps: u64,
    activation: f64,
    held: f64,
}

impl DelayedController {
    pub fn new(
        schedule: ControlSchedule,
        split: ComplianceSplit,
        theta_d: f64,
        physics_dt: f64,
    ) -> Result<Self> {
        schedule.validate()?;
        ensure_positive("physics_dt", physics_dt)?;
        let ratio = schedule.dt_control() / physics_dt;
        let period_steps = ratio.round();
        if period_steps < 1.0 || (ratio - period_steps).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "control period {} s is not a whole multiple of the physics step {} s",
                schedule.dt_control(),
                physics_dt
            )));
        }
        Ok(Self {
            line: DelayLine::for_delay(schedule.delay, physics_dt),
            activation: schedule.dt_activation(),
            schedule,
            split,
            theta_d,
            physics_dt,
            period_steps: period_steps as u64,
            held: 0.0,
        })
    }

    pub fn schedule(&self) -> &ControlSchedule {
        &self.schedule
    }

    pub fn line(&self) -> &DelayLine {
        &self.line
    }

    /// Records the knee angle measured at step `n` and returns the motor
    /// torque to apply over that step.
    pub fn step(&mut self, n: u64, theta: f64) -> Result<f64> {
        let t = n as f64 * self.physics_dt;
        self.line.record(t, theta)?;
        let phase = n % self.period_steps;
        if phase == 0 {
            let fb = self
                .line
                .query(t - self.schedule.delay)
                .expect("just recorded");
            self.held = motor_torque(&self.split, fb, self.theta_d);
        }
        let on = (self.activation - phase as f64 * self.physics_dt) / self.physics_dt;
        let fraction = on.clamp(0.0, 1.0);
        Ok(if fraction == 1.0 {
            self.held
        } else {
            self.held * fraction
        })
    }
}
