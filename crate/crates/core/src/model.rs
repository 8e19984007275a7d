//! Shared domain types: the passive/active stiffness split, leg geometry and
//! body parameters, plus the scaling law for biological sensorimotor delay.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, ensure_range, Error, Result};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Linear knee spring of the reference leg, N/m.
pub const REFERENCE_LINEAR_STIFFNESS: f64 = 4680.0;

/// Knee pulley radius of the reference leg, m.
pub const REFERENCE_PULLEY_RADIUS: f64 = 0.0189;

/// Total rotational knee stiffness of the reference leg, N·m/rad.
pub const REFERENCE_K_TOTAL: f64 = 1.6717;

/// Segment length of both leg segments, m.
pub const REFERENCE_SEGMENT_LENGTH: f64 = 0.16;

/// Rest knee angle, rad. Unloaded hip height is 2·L·cos(θ_d/2) ≈ 0.3125 m.
pub const REFERENCE_REST_KNEE_ANGLE: f64 = 0.434;

/// Total joint stiffness split into a physical (passive) and a virtual
/// (active) part.
///
/// `lambda_passive` is the fraction carried by the physical spring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSplit")]
pub struct ComplianceSplit {
    k_total: f64,
    lambda_passive: f64,
}

#[derive(Deserialize)]
struct RawSplit {
    k_total: f64,
    lambda_passive: f64,
}

impl TryFrom<RawSplit> for ComplianceSplit {
    type Error = Error;

    fn try_from(raw: RawSplit) -> Result<Self> {
        ComplianceSplit::new(raw.k_total, raw.lambda_passive)
    }
}

impl ComplianceSplit {
    pub fn new(k_total: f64, lambda_passive: f64) -> Result<Self> {
        ensure_positive("k_total", k_total)?;
        ensure_range(
            "lambda_passive",
            lambda_passive,
            0.0,
            1.0,
            "must lie in [0, 1]",
        )?;
        Ok(Self {
            k_total,
            lambda_passive,
        })
    }

    /// The reference leg stiffness with the given passive ratio.
    pub fn reference(lambda_passive: f64) -> Result<Self> {
        Self::new(REFERENCE_K_TOTAL, lambda_passive)
    }

    pub fn k_total(&self) -> f64 {
        self.k_total
    }

    pub fn lambda_passive(&self) -> f64 {
        self.lambda_passive
    }

    pub fn k_passive(&self) -> f64 {
        self.lambda_passive * self.k_total
    }

    /// Computed as the remainder so that `k_passive + k_active` reproduces
    /// `k_total` to within one rounding step.
    pub fn k_active(&self) -> f64 {
        self.k_total - self.k_passive()
    }

    pub fn with_lambda(&self, lambda_passive: f64) -> Result<Self> {
        Self::new(self.k_total, lambda_passive)
    }
}

/// `(k_passive, k_active)` for a split.
pub fn split_stiffness(split: &ComplianceSplit) -> (f64, f64) {
    (split.k_passive(), split.k_active())
}

/// Rotational stiffness of a linear spring acting through a pulley: `k·r²`.
pub fn rotational_from_linear(k_linear: f64, pulley_radius: f64) -> Result<f64> {
    ensure_positive("k_linear", k_linear)?;
    ensure_positive("pulley_radius", pulley_radius)?;
    Ok(k_linear * pulley_radius * pulley_radius)
}

/// Sensorimotor delay of an animal of the given mass, in seconds:
/// `0.031 · M^0.21`.
pub fn biological_delay(mass_kg: f64) -> Result<f64> {
    ensure_positive("mass_kg", mass_kg)?;
    Ok(0.031 * mass_kg.powf(0.21))
}

/// Two equal segments with the hip slaved to half the knee angle, which
/// keeps the foot vertically below the hip.
///
/// Knee angle convention: 0 is the fully extended leg, flexion is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LegGeometry {
    pub segment_length: f64,
    pub knee_pulley_radius: f64,
    pub rest_knee_angle: f64,
    pub hip_constraint_gain: f64,
}

impl Default for LegGeometry {
    fn default() -> Self {
        Self {
            segment_length: REFERENCE_SEGMENT_LENGTH,
            knee_pulley_radius: REFERENCE_PULLEY_RADIUS,
            rest_knee_angle: REFERENCE_REST_KNEE_ANGLE,
            hip_constraint_gain: 0.5,
        }
    }
}

impl LegGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("segment_length", self.segment_length)?;
        ensure_positive("knee_pulley_radius", self.knee_pulley_radius)?;
        ensure_range(
            "rest_knee_angle",
            self.rest_knee_angle,
            f64::MIN_POSITIVE,
            std::f64::consts::PI - 1e-9,
            "must lie in (0, π)",
        )?;
        if self.hip_constraint_gain != 0.5 {
            return Err(Error::Config(format!(
                "hip_constraint_gain must be 0.5 (hip follows half the knee angle), got {}",
                self.hip_constraint_gain
            )));
        }
        Ok(())
    }

    /// Length of the fully extended leg, `2·L`.
    pub fn max_length(&self) -> f64 {
        2.0 * self.segment_length
    }

    /// Hip height above the foot at the given knee angle.
    pub fn hip_height(&self, theta_knee: f64) -> Result<f64> {
        if !(theta_knee > 0.0 && theta_knee < std::f64::consts::PI) {
            return Err(Error::Domain {
                name: "theta_knee",
                value: theta_knee,
                expected: "must lie in (0, π)",
            });
        }
        Ok(self.height_at(theta_knee))
    }

    /// Unchecked `2·L·cos(θ/2)`.
    pub(crate) fn height_at(&self, theta_knee: f64) -> f64 {
        self.max_length() * (0.5 * theta_knee).cos()
    }

    /// `dh/dθ = −L·sin(θ/2)`.
    pub(crate) fn height_slope(&self, theta_knee: f64) -> f64 {
        -self.segment_length * (0.5 * theta_knee).sin()
    }

    /// Inverse of [`LegGeometry::hip_height`]; `height` is clamped to `[0, 2L]`.
    pub(crate) fn knee_angle_at(&self, height: f64) -> f64 {
        let c = (height / self.max_length()).clamp(-1.0, 1.0);
        2.0 * c.acos()
    }

    /// Unloaded hip height, with the knee at its rest angle.
    pub fn rest_height(&self) -> f64 {
        self.height_at(self.rest_knee_angle)
    }
}

/// Lumped body: all mass sits at the hip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyParams {
    pub mass: f64,
    pub hip_damping: f64,
    pub knee_damping: f64,
    pub gravity: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            mass: 0.6,
            hip_damping: 0.01,
            knee_damping: 0.05,
            gravity: GRAVITY,
        }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("mass", self.mass)?;
        crate::error::ensure_non_negative("hip_damping", self.hip_damping)?;
        crate::error::ensure_non_negative("knee_damping", self.knee_damping)?;
        ensure_positive("gravity", self.gravity)?;
        Ok(())
    }

    /// Joint damping reflected onto the knee coordinate. The hip turns at
    /// half the knee rate, so its damping enters with a factor 1/4.
    pub fn knee_equivalent_damping(&self) -> f64 {
        self.knee_damping + 0.25 * self.hip_damping
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn delay_law_reference_masses() {
        assert_abs_diff_eq!(biological_delay(2.0).unwrap(), 0.035, epsilon = 1e-3);
        assert_abs_diff_eq!(biological_delay(0.6).unwrap(), 0.027, epsilon = 1e-3);
        assert_eq!(biological_delay(1.0).unwrap(), 0.031);
    }

    #[test]
    fn delay_law_rejects_non_positive_mass() {
        assert!(biological_delay(0.0).is_err());
        assert!(biological_delay(-1.0).is_err());
        assert!(biological_delay(f64::NAN).is_err());
    }

    #[test]
    fn split_examples() {
        let (p, a) = split_stiffness(&ComplianceSplit::new(1.6717, 1.0).unwrap());
        assert_eq!((p, a), (1.6717, 0.0));
        let (p, a) = split_stiffness(&ComplianceSplit::new(3.0, 0.0).unwrap());
        assert_eq!((p, a), (0.0, 3.0));
        let (p, a) = split_stiffness(&ComplianceSplit::new(1.6717, 0.5).unwrap());
        assert_abs_diff_eq!(p, 0.83585, epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.83585, epsilon = 1e-12);
        assert_eq!(p + a, 1.6717);
    }

    #[test]
    fn split_rejects_bad_ratio() {
        assert!(ComplianceSplit::new(1.0, 1.5).is_err());
        assert!(ComplianceSplit::new(1.0, -0.1).is_err());
        assert!(ComplianceSplit::new(0.0, 0.5).is_err());
        let err =
            serde_json::from_str::<ComplianceSplit>(r#"{"k_total":1.0,"lambda_passive":2.0}"#);
        assert!(err.is_err());
    }

    #[test]
    fn rotational_stiffness_examples() {
        assert_abs_diff_eq!(
            rotational_from_linear(4680.0, 0.0189).unwrap(),
            1.6717,
            epsilon = 5e-4
        );
        assert_eq!(rotational_from_linear(123.0, 1.0).unwrap(), 123.0);
        assert_abs_diff_eq!(
            rotational_from_linear(1000.0, 0.05).unwrap(),
            2.5,
            epsilon = 1e-12
        );
        assert!(rotational_from_linear(-1.0, 0.1).is_err());
        assert!(rotational_from_linear(1.0, 0.0).is_err());
    }

    #[test]
    fn hip_height_examples() {
        let geom = LegGeometry::default();
        assert_abs_diff_eq!(geom.hip_height(1e-9).unwrap(), 0.32, epsilon = 1e-12);
        assert_abs_diff_eq!(
            geom.hip_height(std::f64::consts::FRAC_PI_2).unwrap(),
            0.32 * std::f64::consts::FRAC_PI_4.cos(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            geom.hip_height(std::f64::consts::FRAC_PI_2).unwrap(),
            0.2263,
            epsilon = 1e-4
        );
        assert_abs_diff_eq!(
            geom.hip_height(2.0 * 0.9f64.acos()).unwrap(),
            0.288,
            epsilon = 1e-12
        );
    }

    #[test]
    fn hip_height_rejects_singular_angles() {
        let geom = LegGeometry::default();
        assert!(geom.hip_height(0.0).is_err());
        assert!(geom.hip_height(std::f64::consts::PI).is_err());
        assert!(geom.hip_height(-0.3).is_err());
    }

    #[test]
    fn geometry_rejects_other_hip_gain() {
        let geom = LegGeometry {
            hip_constraint_gain: 0.6,
            ..Default::default()
        };
        assert!(geom.validate().is_err());
        assert!(LegGeometry::default().validate().is_ok());
    }

    #[test]
    fn knee_angle_inverts_height() {
        let geom = LegGeometry::default();
        for theta in [0.1, 0.434, 1.0, 2.5] {
            assert_abs_diff_eq!(
                geom.knee_angle_at(geom.height_at(theta)),
                theta,
                epsilon = 1e-9
            );
        }
    }

    proptest! {
        #[test]
        fn split_sums_to_total(k in 1e-3f64..1e3, lambda in 0.0f64..=1.0) {
            let split = ComplianceSplit::new(k, lambda).unwrap();
            let (p, a) = split_stiffness(&split);
            let sum = p + a;
            prop_assert!((sum - k).abs() <= f64::EPSILON * k);
        }

        #[test]
        fn delay_law_increasing(m in 1e-3f64..1e3, factor in 1.001f64..10.0) {
            prop_assert!(biological_delay(m * factor).unwrap() > biological_delay(m).unwrap());
        }

        #[test]
        fn hip_height_decreasing(a in 1e-6f64..3.1, b in 1e-6f64..3.1) {
            prop_assume!(a < b);
            let geom = LegGeometry::default();
            prop_assert!(geom.hip_height(a).unwrap() > geom.hip_height(b).unwrap());
        }

        #[test]
        fn stiffness_quadratic_in_radius(k in 1.0f64..1e4, r in 1e-3f64..1.0) {
            let single = rotational_from_linear(k, r).unwrap();
            let double = rotational_from_linear(k, 2.0 * r).unwrap();
            prop_assert!((double - 4.0 * single).abs() <= 1e-12 * double);
        }
    }
}
