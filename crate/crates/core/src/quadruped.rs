//! Vertical drop of a four-legged robot whose identical legs share one body
//! height. The legs act in parallel, so the leg simulation runs once with
//! the full body mass and a leg-count multiplier on the ground force.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::ControlSchedule;
use crate::error::{Error, Result};
use crate::leg::{run_drop, DropConfig};
use crate::metrics::{settle_metrics_with, LandingVerdict, VerdictThresholds};
use crate::model::ComplianceSplit;
use crate::trajectory::Trajectory;

const BUNDLED_CASES: &str = include_str!("../data/quadruped_cases.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Landed,
    Failed,
}

impl Outcome {
    pub fn from_verdict(v: &LandingVerdict) -> Self {
        if v.viable {
            Outcome::Landed
        } else {
            Outcome::Failed
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Landed => "landed",
            Outcome::Failed => "failed",
        }
    }
}

/// One row of the scenario table. Stiffness is per-leg knee stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrupedCase {
    pub case: u32,
    /// N·m/rad
    pub k_total: f64,
    pub lambda: f64,
    /// Hz
    pub frequency: f64,
    /// s
    pub delay: f64,
    /// m
    pub drop_height: f64,
    pub expected: Outcome,
}

/// The seven bundled landing scenarios.
pub fn bundled_cases() -> Vec<QuadrupedCase> {
    serde_json::from_str(BUNDLED_CASES).expect("bundled case table is valid JSON")
}

pub fn bundled_case(number: u32) -> Result<QuadrupedCase> {
    bundled_cases()
        .into_iter()
        .find(|c| c.case == number)
        .ok_or_else(|| Error::Domain {
            name: "case",
            value: f64::from(number),
            expected: "must be one of the bundled cases 1-7",
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrupedConfig {
    pub case: QuadrupedCase,
    /// Whole-robot mass, kg.
    #[serde(default = "default_body_mass")]
    pub body_mass: f64,
    #[serde(default = "default_legs")]
    pub legs: u32,
    /// Everything else about each leg; its mass, leg count, stiffness,
    /// schedule and drop height are taken from the fields above.
    #[serde(default = "default_leg")]
    pub leg: DropConfig,
}

fn default_body_mass() -> f64 {
    2.0
}

fn default_legs() -> u32 {
    4
}

fn default_leg() -> DropConfig {
    DropConfig::default()
}

impl QuadrupedConfig {
    pub fn new(case: QuadrupedCase) -> Self {
        Self {
            case,
            body_mass: default_body_mass(),
            legs: default_legs(),
            leg: default_leg(),
        }
    }

    pub fn drop_config(&self) -> Result<DropConfig> {
        let c = &self.case;
        let mut cfg = self.leg;
        cfg.body.mass = self.body_mass;
        cfg.legs = self.legs;
        cfg.drop_height = c.drop_height;
        cfg.split = ComplianceSplit::new(c.k_total, c.lambda)?;
        cfg.schedule = ControlSchedule {
            frequency: c.frequency,
            delay: c.delay,
            ..self.leg.schedule
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrupedRun {
    pub case: QuadrupedCase,
    pub verdict: LandingVerdict,
    pub outcome: Outcome,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

impl QuadrupedRun {
    pub fn matches_expected(&self) -> bool {
        self.outcome == self.case.expected
    }
}

pub fn run_quadruped_case(config: &QuadrupedConfig) -> Result<QuadrupedRun> {
    let trajectory = run_drop(&config.drop_config()?)?;
    let verdict = settle_metrics_with(&trajectory, &VerdictThresholds::default())?;
    Ok(QuadrupedRun {
        case: config.case,
        outcome: Outcome::from_verdict(&verdict),
        verdict,
        trajectory,
    })
}

/// Runs every case in parallel; results keep the input order.
pub fn run_quadruped_table(configs: &[QuadrupedConfig]) -> Result<Vec<QuadrupedRun>> {
    configs.par_iter().map(run_quadruped_case).collect()
}
