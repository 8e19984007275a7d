//! Real polynomials in ascending-coefficient form and their complex roots.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `c[0] + c[1]·s + … + c[n]·sⁿ`, trailing zeros trimmed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().expect("never empty")
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    /// Value and first derivative by Horner's scheme.
    fn eval_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        self.coeffs
            .iter()
            .rev()
            .fold((zero, zero), |(p, dp), &c| (p * s + c, dp * s + p))
    }

    /// `Σ |c_k|·|s|^k`, the natural scale for judging a residual at `s`.
    pub fn magnitude_bound(&self, s: Complex64) -> f64 {
        let r = s.norm();
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * r + c.abs())
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let out = (0..n)
            .map(|k| self.coeffs.get(k).unwrap_or(&0.0) + other.coeffs.get(k).unwrap_or(&0.0))
            .collect();
        Polynomial::new(out)
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * factor).collect())
    }

    /// All complex roots, conjugate-closed and Newton-polished.
    ///
    /// The companion matrix of a rescaled polynomial supplies starting
    /// values; each root is then refined on the original coefficients.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        if self.is_zero() {
            return Err(Error::DegeneratePolynomial);
        }
        let n = self.degree();
        if n == 0 {
            return Ok(Vec::new());
        }

        // s = c·σ with c = |a0/an|^(1/n) equalises the coefficient magnitudes
        // of the monic companion matrix.
        let a0 = self.coeffs[0];
        let an = self.leading();
        let scale = if a0 != 0.0 {
            (a0 / an).abs().powf(1.0 / n as f64)
        } else {
            1.0
        };
        let scaled: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * scale.powi(k as i32) / (an * scale.powi(n as i32)))
            .collect();

        let mut companion = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -scaled[i];
        }
        let eig = companion.complex_eigenvalues();
        let mut roots: Vec<Complex64> = eig.iter().map(|z| z * scale).collect();

        for root in roots.iter_mut() {
            *root = self.polish(*root);
        }
        Ok(conjugate_close(roots))
    }

    fn polish(&self, mut z: Complex64) -> Complex64 {
        for _ in 0..60 {
            let (p, dp) = self.eval_with_derivative(z);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            let next = z - step;
            let improves = self.eval_complex(next).norm() <= p.norm();
            if !improves || !next.re.is_finite() || !next.im.is_finite() {
                break;
            }
            z = next;
            if step.norm() <= 1e-15 * z.norm().max(1.0) {
                break;
            }
        }
        z
    }
}

/// Snaps near-real roots onto the real axis and pairs the remaining ones into
/// exact conjugates.
fn conjugate_close(mut roots: Vec<Complex64>) -> Vec<Complex64> {
    const REAL_TOL: f64 = 1e-10;
    let mut paired = vec![false; roots.len()];
    for i in 0..roots.len() {
        if paired[i] {
            continue;
        }
        let zi = roots[i];
        if zi.im.abs() <= REAL_TOL * zi.norm().max(1.0) {
            roots[i] = Complex64::new(zi.re, 0.0);
            paired[i] = true;
            continue;
        }
        let partner = (i + 1..roots.len())
            .filter(|&j| !paired[j])
            .min_by(|&a, &b| {
                let da = (roots[a] - zi.conj()).norm();
                let db = (roots[b] - zi.conj()).norm();
                da.total_cmp(&db)
            });
        if let Some(j) = partner {
            let re = 0.5 * (zi.re + roots[j].re);
            let im = 0.5 * (zi.im.abs() + roots[j].im.abs());
            roots[i] = Complex64::new(re, im);
            roots[j] = Complex64::new(re, -im);
            paired[j] = true;
        }
        paired[i] = true;
    }
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trims_trailing_zeros() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 1);
        assert_eq!(Polynomial::new(vec![]).degree(), 0);
    }

    #[test]
    fn zero_polynomial_is_degenerate() {
        assert!(matches!(
            Polynomial::new(vec![0.0, 0.0]).roots(),
            Err(Error::DegeneratePolynomial)
        ));
    }

    #[test]
    fn quadratic_roots() {
        // (s + 1)(s + 3)
        let roots = Polynomial::new(vec![3.0, 4.0, 1.0]).roots().unwrap();
        assert_abs_diff_eq!(roots[0].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(roots[1].re, -3.0, epsilon = 1e-12);
        assert_eq!(roots[0].im, 0.0);
    }

    #[test]
    fn complex_pair_is_exactly_conjugate() {
        // s² + 2s + 5 → −1 ± 2i
        let roots = Polynomial::new(vec![5.0, 2.0, 1.0]).roots().unwrap();
        assert_eq!(roots[0], roots[1].conj());
        assert_abs_diff_eq!(roots[0].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(roots[0].im.abs(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn badly_scaled_quintic() {
        // Roots spread over six decades.
        let factors = [-1e-2, -1.0, -30.0, -500.0, -4.0e4];
        let p = factors.iter().fold(Polynomial::new(vec![1.0]), |acc, r| {
            acc.mul(&Polynomial::new(vec![-r, 1.0]))
        });
        let mut found: Vec<f64> = p.roots().unwrap().iter().map(|z| z.re).collect();
        found.sort_by(|a, b| b.total_cmp(a));
        for (f, e) in found.iter().zip(factors) {
            assert!((f - e).abs() <= 1e-9 * e.abs(), "{f} vs {e}");
        }
    }

    #[test]
    fn mul_and_add() {
        let a = Polynomial::new(vec![1.0, 1.0]);
        let b = Polynomial::new(vec![-1.0, 1.0]);
        assert_eq!(a.mul(&b).coefficients(), &[-1.0, 0.0, 1.0]);
        assert_eq!(a.add(&b).coefficients(), &[0.0, 2.0]);
        assert_eq!(a.add(&b.scale(-1.0)).coefficients(), &[2.0]);
    }
}
