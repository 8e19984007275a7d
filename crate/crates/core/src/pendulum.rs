//! Linearised single-joint pendulum with delayed virtual-stiffness feedback.
//!
//! Closed loop: `I θ̈ + B θ̇ + (K_p + m g l)(θ − θ_d) = −K_a (θ(t − t_d) − θ_d)`.
//! Poles come from a third-order Padé approximant of the delay; step
//! responses integrate the delay equation directly.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::model::{ComplianceSplit, GRAVITY};
use crate::poly::Polynomial;

/// Ratio to the step size above which a step response counts as unstable.
pub const UNSTABLE_EXCURSION: f64 = 10.0;

/// Settling band for step responses, as a fraction of the step.
pub const STEP_SETTLING_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub inertia: f64,
    pub mass: f64,
    pub com_distance: f64,
    pub damping: f64,
    pub split: ComplianceSplit,
    pub delay: f64,
    pub equilibrium: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    GRAVITY
}

impl PendulumParams {
    /// m = 0.5 kg, K_total = 1.15 N·m/rad, B = 0.14 N·m·s/rad, l = 0.16 m,
    /// point-mass inertia `m·l²`.
    pub fn reference(lambda_passive: f64, delay: f64) -> Result<Self> {
        let mass = 0.5;
        let com_distance = 0.16;
        let params = Self {
            inertia: mass * com_distance * com_distance,
            mass,
            com_distance,
            damping: 0.14,
            split: ComplianceSplit::new(1.15, lambda_passive)?,
            delay,
            equilibrium: 0.0,
            gravity: GRAVITY,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_delay(mut self, delay: f64) -> Result<Self> {
        self.delay = delay;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda_passive: f64) -> Result<Self> {
        self.split = self.split.with_lambda(lambda_passive)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("inertia", self.inertia)?;
        ensure_non_negative("mass", self.mass)?;
        ensure_non_negative("com_distance", self.com_distance)?;
        ensure_non_negative("damping", self.damping)?;
        ensure_non_negative("delay", self.delay)?;
        ensure_positive("gravity", self.gravity)?;
        Ok(())
    }

    /// Undelayed restoring stiffness: physical spring plus linearised gravity.
    pub fn static_stiffness(&self) -> f64 {
        self.split.k_passive() + self.mass * self.gravity * self.com_distance
    }
}

/// (3,3) Padé approximant of `e^{−t_d s}` as `(N(s), D(s))`.
pub fn pade3(delay: f64) -> Result<(Polynomial, Polynomial)> {
    ensure_non_negative("delay", delay)?;
    let (t1, t2, t3) = (delay, delay * delay, delay * delay * delay);
    let num = Polynomial::new(vec![120.0, -60.0 * t1, 12.0 * t2, -t3]);
    let den = Polynomial::new(vec![120.0, 60.0 * t1, 12.0 * t2, t3]);
    Ok((num, den))
}

/// Closed-loop characteristic polynomial with the delay replaced by its
/// Padé approximant: `(I s² + B s + K_p + m g l)·D(s) + K_a·N(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicPolynomial(Polynomial);

impl CharacteristicPolynomial {
    pub fn polynomial(&self) -> &Polynomial {
        &self.0
    }

    pub fn coefficients(&self) -> &[f64] {
        self.0.coefficients()
    }

    pub fn degree(&self) -> usize {
        self.0.degree()
    }
}

pub fn characteristic_polynomial(p: &PendulumParams) -> Result<CharacteristicPolynomial> {
    p.validate()?;
    let (num, den) = pade3(p.delay)?;
    let plant = Polynomial::new(vec![p.static_stiffness(), p.damping, p.inertia]);
    let poly = plant.mul(&den).add(&num.scale(p.split.k_active()));
    if poly.is_zero() {
        return Err(Error::DegeneratePolynomial);
    }
    Ok(CharacteristicPolynomial(poly))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleSet {
    pub roots: Vec<Complex64>,
    pub dominant: Complex64,
}

impl PoleSet {
    pub fn is_stable(&self) -> bool {
        self.dominant.re < 0.0
    }
}

pub fn poles(p: &PendulumParams) -> Result<PoleSet> {
    let poly = characteristic_polynomial(p)?;
    let roots = poly.polynomial().roots()?;
    for r in &roots {
        let residual = poly.polynomial().eval_complex(*r).norm();
        let scale = poly.polynomial().magnitude_bound(*r);
        if !(residual <= 1e-8 * scale) {
            return Err(Error::RootFinding(format!(
                "root {r} has residual {residual:e} against scale {scale:e}"
            )));
        }
    }
    let dominant = *roots
        .iter()
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .ok_or(Error::DegeneratePolynomial)?;
    Ok(PoleSet { roots, dominant })
}

/// Smallest delay on `[0, max_delay]` (sampled every `resolution` seconds)
/// at which the dominant pole has a non-negative real part, refined by
/// bisection. `None` if the system stays stable over the whole range.
pub fn critical_delay(p: &PendulumParams, max_delay: f64, resolution: f64) -> Result<Option<f64>> {
    ensure_positive("resolution", resolution)?;
    let real_at = |d: f64| -> Result<f64> { Ok(poles(&p.with_delay(d)?)?.dominant.re) };
    let steps = (max_delay / resolution).ceil() as usize;
    let mut lo = 0.0;
    if real_at(lo)? >= 0.0 {
        return Ok(Some(0.0));
    }
    for k in 1..=steps {
        let hi = (k as f64 * resolution).min(max_delay);
        if real_at(hi)? >= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if real_at(mid)? >= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(Some(b));
        }
        lo = hi;
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum StepClass {
    Unstable,
    /// Inside the settling band from `settling_time` to the end of the horizon.
    Settled {
        settling_time: f64,
    },
    /// Bounded but still outside the band at the end of the horizon.
    Oscillating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub step: f64,
    /// Commanded final angle, `equilibrium + step`.
    pub target: f64,
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    /// Set when the state became non-finite; samples stop there.
    pub diverged: bool,
}

impl StepResponse {
    pub fn classify(&self) -> StepClass {
        let target = self.target;
        let scale = self.step.abs().max(f64::MIN_POSITIVE);
        if self.diverged
            || self
                .theta
                .iter()
                .any(|th| (th - target).abs() > UNSTABLE_EXCURSION * scale)
        {
            return StepClass::Unstable;
        }
        let band = STEP_SETTLING_BAND * scale;
        match self.theta.iter().rposition(|th| (th - target).abs() > band) {
            None => StepClass::Settled { settling_time: 0.0 },
            Some(i) if i + 1 < self.t.len() => StepClass::Settled {
                settling_time: self.t[i + 1],
            },
            Some(_) => StepClass::Oscillating,
        }
    }
}

/// Past states sampled on a uniform grid, read back with cubic Hermite
/// interpolation. Times before the first sample return the initial state.
#[derive(Debug, Clone)]
struct HermiteHistory {
    dt: f64,
    /// Index of the oldest retained sample on the global grid.
    first: usize,
    samples: VecDeque<(f64, f64)>,
    capacity: usize,
}

impl HermiteHistory {
    fn new(dt: f64, delay: f64, initial: (f64, f64)) -> Self {
        let capacity = (delay / dt).ceil() as usize + 3;
        let mut samples = VecDeque::with_capacity(capacity);
        samples.push_back(initial);
        Self {
            dt,
            first: 0,
            samples,
            capacity,
        }
    }

    fn push(&mut self, sample: (f64, f64)) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
            self.first += 1;
        }
        self.samples.push_back(sample);
    }

    fn angle_at(&self, t: f64) -> f64 {
        let t0 = self.first as f64 * self.dt;
        if t <= t0 {
            return self.samples[0].0;
        }
        let x = (t - t0) / self.dt;
        let i = (x.floor() as usize).min(self.samples.len() - 1);
        if i + 1 >= self.samples.len() {
            return self.samples[self.samples.len() - 1].0;
        }
        let u = x - i as f64;
        let (y0, v0) = self.samples[i];
        let (y1, v1) = self.samples[i + 1];
        let h = self.dt;
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * h * v0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * h * v1
    }
}

fn check_horizon(p: &PendulumParams, t_end: f64, dt: f64) -> Result<usize> {
    p.validate()?;
    ensure_positive("t_end", t_end)?;
    ensure_positive("dt", dt)?;
    if p.delay > 0.0 && dt > p.delay * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "time step {dt} s exceeds the delay {} s; the delayed state would not be resolved",
            p.delay
        )));
    }
    Ok((t_end / dt).round() as usize)
}

/// Step in the equilibrium command at `t = 0` from rest, integrated with
/// classic RK4 on the delay equation.
pub fn step_response(p: &PendulumParams, step: f64, t_end: f64, dt: f64) -> Result<StepResponse> {
    let n = check_horizon(p, t_end, dt)?;
    let k_static = p.static_stiffness();
    let k_active = p.split.k_active();
    let target = p.equilibrium + step;
    let accel = |theta: f64, omega: f64, delayed: f64| -> f64 {
        (-p.damping * omega - k_static * (theta - target) - k_active * (delayed - target))
            / p.inertia
    };

    let mut theta = p.equilibrium;
    let mut omega = 0.0;
    let mut history = HermiteHistory::new(dt, p.delay, (theta, omega));
    let mut out = StepResponse {
        step,
        target,
        t: Vec::with_capacity(n + 1),
        theta: Vec::with_capacity(n + 1),
        diverged: false,
    };
    out.t.push(0.0);
    out.theta.push(theta);

    let delayed_at = |history: &HermiteHistory, t: f64, current: f64| {
        if p.delay == 0.0 {
            current
        } else {
            history.angle_at(t - p.delay)
        }
    };

    for k in 0..n {
        let t = k as f64 * dt;
        let h = dt;
        let d1 = delayed_at(&history, t, theta);
        let (k1x, k1v) = (omega, accel(theta, omega, d1));
        let (x2, v2) = (theta + 0.5 * h * k1x, omega + 0.5 * h * k1v);
        let d2 = delayed_at(&history, t + 0.5 * h, x2);
        let (k2x, k2v) = (v2, accel(x2, v2, d2));
        let (x3, v3) = (theta + 0.5 * h * k2x, omega + 0.5 * h * k2v);
        let d3 = delayed_at(&history, t + 0.5 * h, x3);
        let (k3x, k3v) = (v3, accel(x3, v3, d3));
        let (x4, v4) = (theta + h * k3x, omega + h * k3v);
        let d4 = delayed_at(&history, t + h, x4);
        let (k4x, k4v) = (v4, accel(x4, v4, d4));
        theta += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        omega += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if !theta.is_finite() || !omega.is_finite() {
            out.diverged = true;
            break;
        }
        history.push((theta, omega));
        out.t.push((k + 1) as f64 * dt);
        out.theta.push(theta);
    }
    Ok(out)
}

/// Step response of the rational (Padé) model of the same loop, realised in
/// controllable canonical form and integrated with RK4.
///
/// The command enters undelayed, as in [`step_response`], so the transfer
/// function is `(K_total + m g l)·D(s) / characteristic(s)`.
pub fn pade_step_response(
    p: &PendulumParams,
    step: f64,
    t_end: f64,
    dt: f64,
) -> Result<StepResponse> {
    ensure_positive("t_end", t_end)?;
    ensure_positive("dt", dt)?;
    let n_steps = (t_end / dt).round() as usize;
    let den = characteristic_polynomial(p)?;
    let (_, pade_den) = pade3(p.delay)?;
    let num = pade_den.scale(p.static_stiffness() + p.split.k_active());

    let a = den.coefficients();
    let order = den.degree();
    let lead = a[order];
    let a: Vec<f64> = a.iter().map(|c| c / lead).collect();
    let mut b: Vec<f64> = num.coefficients().iter().map(|c| c / lead).collect();
    b.resize(order, 0.0);

    // x_i' = x_{i+1}, x_{n-1}' = −Σ a_i x_i + u, y = Σ b_i x_i
    let deriv = |x: &[f64], out: &mut [f64]| {
        out[..order - 1].copy_from_slice(&x[1..order]);
        out[order - 1] = step - (0..order).map(|i| a[i] * x[i]).sum::<f64>();
    };
    let output = |x: &[f64]| p.equilibrium + (0..order).map(|i| b[i] * x[i]).sum::<f64>();

    let mut x = vec![0.0; order];
    let mut k1 = vec![0.0; order];
    let mut k2 = vec![0.0; order];
    let mut k3 = vec![0.0; order];
    let mut k4 = vec![0.0; order];
    let mut tmp = vec![0.0; order];

    let mut out = StepResponse {
        step,
        target: p.equilibrium + step,
        t: vec![0.0],
        theta: vec![output(&x)],
        diverged: false,
    };
    for k in 0..n_steps {
        deriv(&x, &mut k1);
        for i in 0..order {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..order {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..order {
            tmp[i] = x[i] + dt * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..order {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let y = output(&x);
        if !y.is_finite() {
            out.diverged = true;
            break;
        }
        out.t.push((k + 1) as f64 * dt);
        out.theta.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reference(lambda: f64, delay: f64) -> PendulumParams {
        PendulumParams::reference(lambda, delay).unwrap()
    }

    #[test]
    fn pade_without_delay_is_unity() {
        let (n, d) = pade3(0.0).unwrap();
        assert_eq!(n.coefficients(), &[120.0]);
        assert_eq!(d.coefficients(), &[120.0]);
    }

    #[test]
    fn pade_is_one_at_origin() {
        for td in [0.001, 0.02, 0.3] {
            let (n, d) = pade3(td).unwrap();
            assert_eq!(n.eval(0.0) / d.eval(0.0), 1.0);
        }
    }

    #[test]
    fn pade_matches_exponential() {
        let (n, d) = pade3(0.02).unwrap();
        let approx = n.eval(10.0) / d.eval(10.0);
        assert!((approx - (-0.2f64).exp()).abs() < 1e-6);
        // Same accuracy across |t_d s| ≤ 0.5.
        for k in 0..=50 {
            let s = k as f64 * 0.5;
            let r = n.eval(s) / d.eval(s);
            let e = (-0.02 * s).exp();
            assert!(((r - e) / e).abs() < 1e-6, "s = {s}");
        }
    }

    #[test]
    fn pade_rejects_negative_delay() {
        assert!(pade3(-1e-3).is_err());
    }

    #[test]
    fn polynomial_degree_follows_delay() {
        assert_eq!(
            characteristic_polynomial(&reference(0.3, 0.0))
                .unwrap()
                .degree(),
            2
        );
        assert_eq!(
            characteristic_polynomial(&reference(0.3, 0.01))
                .unwrap()
                .degree(),
            5
        );
    }

    #[test]
    fn fully_passive_without_delay_is_plant() {
        let p = reference(1.0, 0.0);
        let poly = characteristic_polynomial(&p).unwrap();
        let scale = 120.0;
        let c = poly.coefficients();
        assert_abs_diff_eq!(c[2] / scale, p.inertia, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1] / scale, p.damping, epsilon = 1e-15);
        assert_abs_diff_eq!(c[0] / scale, 1.15 + 0.5 * GRAVITY * 0.16, epsilon = 1e-12);
    }

    #[test]
    fn fully_active_without_delay_is_stable() {
        let set = poles(&reference(0.0, 0.0)).unwrap();
        assert_eq!(set.roots.len(), 2);
        assert!(set.roots.iter().all(|r| r.re < 0.0));
    }

    #[test]
    fn roots_have_small_residual() {
        for lambda in [0.0, 0.3, 0.7, 1.0] {
            for td in [0.0, 0.001, 0.005, 0.02, 0.03, 0.1] {
                let p = reference(lambda, td);
                let poly = characteristic_polynomial(&p).unwrap();
                let bound = 1e-8 * poly.polynomial().max_abs_coefficient();
                for r in poles(&p).unwrap().roots {
                    let v = poly.polynomial().eval_complex(r).norm();
                    assert!(v < bound, "λ={lambda} td={td} root {r}: {v:e} ≥ {bound:e}");
                }
            }
        }
    }

    #[test]
    fn overdamped_roots_are_real_negative() {
        let mut p = reference(0.5, 0.0);
        p.damping = 5.0;
        let set = poles(&p).unwrap();
        assert!(set.roots.iter().all(|r| r.im == 0.0 && r.re < 0.0));
    }

    #[test]
    fn zero_delay_matches_quadratic_formula() {
        let p = reference(0.4, 0.0);
        let k = 1.15 + p.mass * GRAVITY * p.com_distance;
        let disc = Complex64::new(p.damping * p.damping - 4.0 * p.inertia * k, 0.0).sqrt();
        let r1 = (-p.damping + disc) / (2.0 * p.inertia);
        let r2 = (-p.damping - disc) / (2.0 * p.inertia);
        let set = poles(&p).unwrap();
        let matches = |r: Complex64| set.roots.iter().any(|s| (s - r).norm() < 1e-9 * r.norm());
        assert!(matches(r1) && matches(r2));
    }

    #[test]
    fn conjugate_symmetry() {
        for td in [0.004, 0.017, 0.03] {
            let set = poles(&reference(0.2, td)).unwrap();
            for r in &set.roots {
                if r.im != 0.0 {
                    assert!(set
                        .roots
                        .iter()
                        .any(|s| (s - r.conj()).norm() <= 1e-9 * r.norm()));
                }
            }
        }
    }

    #[test]
    fn fully_passive_is_delay_invariant() {
        let base = poles(&reference(1.0, 0.0)).unwrap();
        for td in [0.005, 0.02, 0.05] {
            let set = poles(&reference(1.0, td)).unwrap();
            // The Padé factor D(s) contributes its own roots; the plant pair is unchanged.
            for r in &base.roots {
                assert!(set.roots.iter().any(|s| (s - r).norm() < 1e-9 * r.norm()));
            }
            assert!((set.dominant - base.dominant).norm() < 1e-9 * base.dominant.norm());
        }
        let a = step_response(&reference(1.0, 0.0), 1.0, 1.0, 1e-3).unwrap();
        let b = step_response(&reference(1.0, 0.02), 1.0, 1.0, 1e-3).unwrap();
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn step_rejects_unresolved_delay() {
        let p = reference(0.5, 0.0005);
        assert!(matches!(
            step_response(&p, 1.0, 1.0, 1e-3),
            Err(Error::Config(_))
        ));
    }

    /// Closed-form step of `I θ̈ + B θ̇ + K θ = K s` from rest.
    fn second_order_step(i: f64, b: f64, k: f64, s: f64, t: f64) -> f64 {
        let wn = (k / i).sqrt();
        let zeta = b / (2.0 * (k * i).sqrt());
        assert!(zeta < 1.0);
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let decay = (-zeta * wn * t).exp();
        s * (1.0 - decay * ((wd * t).cos() + zeta * wn / wd * (wd * t).sin()))
    }

    #[test]
    fn zero_delay_step_matches_closed_form() {
        let p = reference(0.7, 0.0);
        let resp = step_response(&p, 1.0, 2.0, 1e-3).unwrap();
        let k = p.static_stiffness() + p.split.k_active();
        for (t, th) in resp.t.iter().zip(&resp.theta) {
            let exact = second_order_step(p.inertia, p.damping, k, 1.0, *t);
            assert!((th - exact).abs() < 1e-4, "t = {t}");
        }
        assert!(matches!(resp.classify(), StepClass::Settled { .. }));
    }

    #[test]
    fn hermite_history_reproduces_cubic() {
        // θ(t) = t³, θ'(t) = 3t² is reproduced exactly by cubic Hermite.
        let dt = 0.01;
        let mut h = HermiteHistory::new(dt, 0.1, (0.0, 0.0));
        for k in 1..=20 {
            let t = k as f64 * dt;
            h.push((t * t * t, 3.0 * t * t));
        }
        for q in [0.1234, 0.15, 0.1999] {
            assert_abs_diff_eq!(h.angle_at(q), q * q * q, epsilon = 1e-12);
        }
        // Before the retained window → oldest retained sample.
        assert_eq!(h.angle_at(-1.0), h.samples[0].0);
    }

    #[test]
    fn classification_edges() {
        let resp = StepResponse {
            step: 1.0,
            target: 1.0,
            t: vec![0.0, 1.0, 2.0],
            theta: vec![0.0, 1.0, 1.0],
            diverged: false,
        };
        assert_eq!(resp.classify(), StepClass::Settled { settling_time: 1.0 });
        let resp = StepResponse {
            theta: vec![0.0, 1.0, 0.5],
            ..resp
        };
        assert_eq!(resp.classify(), StepClass::Oscillating);
        let resp = StepResponse {
            theta: vec![0.0, 11.5, 0.5],
            ..resp
        };
        assert_eq!(resp.classify(), StepClass::Unstable);
    }

    #[test]
    fn pade_ode_matches_dde_for_small_delay() {
        let p = reference(0.3, 0.01);
        let dde = step_response(&p, 1.0, 2.0, 1e-3).unwrap();
        let ode = pade_step_response(&p, 1.0, 2.0, 1e-3).unwrap();
        let rms = (dde
            .theta
            .iter()
            .zip(&ode.theta)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / dde.theta.len() as f64)
            .sqrt();
        assert!(rms < 1e-3, "rms = {rms}");
    }

    #[test]
    fn critical_delay_brackets_sign_change() {
        let p = reference(0.0, 0.0);
        let td = critical_delay(&p, 0.5, 0.01).unwrap().expect("crosses");
        assert!(
            poles(&p.with_delay(td * 0.999).unwrap())
                .unwrap()
                .dominant
                .re
                < 0.0
        );
        assert!(
            poles(&p.with_delay(td * 1.001).unwrap())
                .unwrap()
                .dominant
                .re
                > 0.0
        );
    }
}
