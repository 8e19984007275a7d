//! Landing verdicts and trajectory comparison.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, ensure_range, Error, Result};
use crate::trajectory::{SimStatus, Trajectory};

/// Thresholds for judging a landing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictThresholds {
    /// Settling band as a fraction of the drop-to-final excursion.
    pub band_fraction: f64,
    /// Window at the end of the run averaged for the final height, s.
    pub tail_window: f64,
    /// Minimum simulated time after touch-down, s.
    pub min_post_touchdown: f64,
    pub max_settling_time: f64,
    pub min_final_height: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self {
            band_fraction: 0.05,
            tail_window: 0.5,
            min_post_touchdown: 2.0,
            max_settling_time: 0.7,
            min_final_height: 0.3,
        }
    }
}

impl VerdictThresholds {
    pub fn with_band(band_fraction: f64) -> Self {
        Self {
            band_fraction,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    #[default]
    None,
    SlowSettling,
    Collapsed,
    Diverged,
    Inverted,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::None => "none",
            FailureReason::SlowSettling => "slow_settling",
            FailureReason::Collapsed => "collapsed",
            FailureReason::Diverged => "diverged",
            FailureReason::Inverted => "inverted",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingVerdict {
    /// Time from touch-down to the last excursion outside the band, s.
    /// `None` when the run ended in a failure state before it could settle.
    pub settling_time: Option<f64>,
    /// Mean hip height over the trailing window, or the last height of a
    /// run that failed early.
    pub final_height: f64,
    pub viable: bool,
    pub failure_reason: FailureReason,
}

impl LandingVerdict {
    fn failed(reason: FailureReason, final_height: f64) -> Self {
        Self {
            settling_time: None,
            final_height,
            viable: false,
            failure_reason: reason,
        }
    }
}

/// Settling time, final height and viability of a drop trajectory.
pub fn settle_metrics(traj: &Trajectory, band_fraction: f64) -> Result<LandingVerdict> {
    settle_metrics_with(traj, &VerdictThresholds::with_band(band_fraction))
}

pub fn settle_metrics_with(traj: &Trajectory, th: &VerdictThresholds) -> Result<LandingVerdict> {
    ensure_range(
        "band_fraction",
        th.band_fraction,
        0.0,
        1.0,
        "must lie in [0, 1]",
    )?;
    ensure_positive("tail_window", th.tail_window)?;
    let last = traj
        .samples
        .last()
        .ok_or_else(|| Error::Trajectory("empty trajectory".into()))?;
    match traj.status {
        SimStatus::Diverged { .. } => {
            return Ok(LandingVerdict::failed(FailureReason::Diverged, last.z))
        }
        SimStatus::Inverted { .. } => {
            return Ok(LandingVerdict::failed(FailureReason::Inverted, last.z))
        }
        SimStatus::Completed => {}
    }

    let touchdown = traj
        .touchdown
        .ok_or_else(|| Error::Trajectory("the leg never touched down".into()))?;
    let span = last.t - touchdown;
    if span + 1e-9 < th.min_post_touchdown {
        return Err(Error::Trajectory(format!(
            "only {span:.3} s after touch-down, {:.3} s required",
            th.min_post_touchdown
        )));
    }

    let tail_start = last.t - th.tail_window;
    let (sum, count) = traj
        .samples
        .iter()
        .filter(|s| s.t >= tail_start - 1e-12)
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.z, n + 1));
    let final_height = sum / count as f64;

    let band = (th.band_fraction * (traj.drop_height - final_height).abs()).max(1e-9);
    let last_out = traj
        .samples
        .iter()
        .rev()
        .take_while(|s| s.t >= touchdown)
        .find(|s| (s.z - final_height).abs() > band)
        .map(|s| s.t);
    let settling_time = last_out.map_or(0.0, |t| (t - touchdown).max(0.0));

    let failure_reason = if !final_height.is_finite() {
        FailureReason::Diverged
    } else if final_height < th.min_final_height {
        FailureReason::Collapsed
    } else if settling_time > th.max_settling_time {
        FailureReason::SlowSettling
    } else {
        FailureReason::None
    };
    Ok(LandingVerdict {
        settling_time: Some(settling_time),
        final_height,
        viable: failure_reason == FailureReason::None,
        failure_reason,
    })
}

/// Settling times for several band fractions, to show how much a verdict
/// depends on the band choice.
pub fn band_sensitivity(traj: &Trajectory, fractions: &[f64]) -> Result<Vec<(f64, Option<f64>)>> {
    fractions
        .iter()
        .map(|&f| Ok((f, settle_metrics(traj, f)?.settling_time)))
        .collect()
}

/// Grid spacing used when comparing trajectories, s.
pub const COMPARE_DT: f64 = 1e-3;

/// Mean squared hip-height difference over the common time range, divided
/// by `normalization²`. Both series are linearly resampled at 1 kHz.
pub fn trajectory_mse(a: &Trajectory, b: &Trajectory, normalization: f64) -> Result<f64> {
    ensure_positive("normalization", normalization)?;
    let no_overlap = || Error::Trajectory("trajectories do not overlap in time".into());
    let start = a
        .start_time()
        .ok_or_else(no_overlap)?
        .max(b.start_time().ok_or_else(no_overlap)?);
    let end = a
        .end_time()
        .ok_or_else(no_overlap)?
        .min(b.end_time().ok_or_else(no_overlap)?);
    if start > end {
        return Err(no_overlap());
    }
    let n = ((end - start) / COMPARE_DT + 1e-9).floor() as usize + 1;
    let mut sum = 0.0;
    for k in 0..n {
        let t = (start + k as f64 * COMPARE_DT).min(end);
        let za = a.height_at(t).ok_or_else(no_overlap)?;
        let zb = b.height_at(t).ok_or_else(no_overlap)?;
        sum += (za - zb).powi(2);
    }
    Ok(sum / n as f64 / (normalization * normalization))
}
