//! Chebyshev interpolation and evaluation on first-kind nodes.
//!
//! Used by the long-range solver to represent fields along the free (z)
//! direction, and by the window module for piecewise polynomial tables.

use crate::error::{Error, Result};
use crate::math::ln_factorial;

/// First-kind Chebyshev nodes scaled to an interval, plus the precomputed
/// coefficient transform.
#[derive(Debug, Clone)]
pub struct ChebyshevGrid {
    /// Number of nodes / series terms P.
    pub degree: usize,
    /// Physical interval [a, b].
    pub interval: (f64, f64),
    /// Nodes in physical coordinates, strictly decreasing.
    pub nodes: Vec<f64>,
    /// transform[n*P + i] = (2/P) cos(n (i - 1/2) pi / P); maps samples to
    /// coefficients (the inverse of the node Vandermonde matrix).
    transform: Vec<f64>,
}

/// Truncated Chebyshev series with the half-weight convention on the leading
/// coefficient: f(x) = a0/2 + sum_{n>=1} a_n T_n(x).
#[derive(Debug, Clone)]
pub struct ChebyshevSeries {
    pub coeffs: Vec<f64>,
    pub interval: (f64, f64),
}

impl ChebyshevGrid {
    pub fn new(degree: usize, interval: (f64, f64)) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidParameter("Chebyshev degree must be >= 1".into()));
        }
        let (a, b) = interval;
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "invalid Chebyshev interval [{a}, {b}]"
            )));
        }
        let p = degree;
        let center = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let nodes: Vec<f64> = (0..p)
            .map(|i| {
                let x = (std::f64::consts::PI * (i as f64 + 0.5) / p as f64).cos();
                center + half * x
            })
            .collect();
        let mut transform = vec![0.0; p * p];
        for n in 0..p {
            for i in 0..p {
                transform[n * p + i] = 2.0 / p as f64
                    * (n as f64 * (i as f64 + 0.5) * std::f64::consts::PI / p as f64).cos();
            }
        }
        Ok(Self { degree, interval, nodes, transform })
    }

    /// Map a physical coordinate to [-1, 1].
    #[inline]
    pub fn to_unit(&self, x: f64) -> f64 {
        let (a, b) = self.interval;
        (2.0 * x - (a + b)) / (b - a)
    }

    /// Chebyshev coefficients (half-weight convention) from samples taken at
    /// `self.nodes`, in node order.
    pub fn coeffs_from_samples(&self, samples: &[f64]) -> Vec<f64> {
        assert_eq!(samples.len(), self.degree);
        let p = self.degree;
        let mut coeffs = vec![0.0; p];
        for n in 0..p {
            let row = &self.transform[n * p..(n + 1) * p];
            coeffs[n] = row.iter().zip(samples).map(|(t, f)| t * f).sum();
        }
        coeffs
    }

    /// Coefficient transform for complex samples (real transform applied to
    /// both parts).
    pub fn coeffs_from_samples_complex(
        &self,
        samples: &[rustfft::num_complex::Complex64],
    ) -> Vec<rustfft::num_complex::Complex64> {
        assert_eq!(samples.len(), self.degree);
        let p = self.degree;
        let mut coeffs = vec![rustfft::num_complex::Complex64::default(); p];
        for n in 0..p {
            let row = &self.transform[n * p..(n + 1) * p];
            let mut acc = rustfft::num_complex::Complex64::default();
            for (t, f) in row.iter().zip(samples) {
                acc += f * *t;
            }
            coeffs[n] = acc;
        }
        coeffs
    }

    pub fn interpolate(&self, samples: &[f64]) -> Result<ChebyshevSeries> {
        if samples.len() != self.degree {
            return Err(Error::LengthMismatch(format!(
                "{} samples for a degree-{} grid",
                samples.len(),
                self.degree
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample".into()));
        }
        Ok(ChebyshevSeries { coeffs: self.coeffs_from_samples(samples), interval: self.interval })
    }
}

impl ChebyshevSeries {
    /// Evaluate the series at points inside the interval.
    pub fn evaluate(&self, points: &[f64]) -> Result<Vec<f64>> {
        let (a, b) = self.interval;
        let slack = 1e-12 * (b - a);
        points
            .iter()
            .map(|&x| {
                if x < a - slack || x > b + slack {
                    return Err(Error::InvalidParameter(format!(
                        "evaluation point {x} outside [{a}, {b}]"
                    )));
                }
                let t = ((2.0 * x - (a + b)) / (b - a)).clamp(-1.0, 1.0);
                Ok(clenshaw_half_weight(&self.coeffs, t))
            })
            .collect()
    }
}

/// Clenshaw evaluation of a0/2 + sum_{n>=1} a_n T_n(t) for t in [-1, 1].
#[inline]
pub fn clenshaw_half_weight(coeffs: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &a in coeffs.iter().skip(1).rev() {
        let b0 = a + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    0.5 * coeffs[0] + t * b1 - b2
}

/// Clenshaw evaluation for complex coefficient series.
#[inline]
pub fn clenshaw_half_weight_complex(
    coeffs: &[rustfft::num_complex::Complex64],
    t: f64,
) -> rustfft::num_complex::Complex64 {
    let mut b1 = rustfft::num_complex::Complex64::default();
    let mut b2 = rustfft::num_complex::Complex64::default();
    for &a in coeffs.iter().skip(1).rev() {
        let b0 = a + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    0.5 * coeffs[0] + t * b1 - b2
}

/// Upper bound on the max-norm error of the P-term Chebyshev interpolant of
/// exp(-z^2/s^2) on [-Lz/2, Lz/2] when s >= eta*Lz:
/// 1 / (sqrt(P!) (2 sqrt(2) eta)^P), evaluated in log space.
pub fn gaussian_cheb_bound(eta: f64, p: usize) -> f64 {
    assert!(eta > 0.0 && p >= 1);
    let log = -0.5 * ln_factorial(p) - p as f64 * (2.0 * std::f64::consts::SQRT_2 * eta).ln();
    log.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_has_doubled_leading_coefficient() {
        let grid = ChebyshevGrid::new(8, (-1.0, 1.0)).unwrap();
        let series = grid.interpolate(&vec![1.0; 8]).unwrap();
        assert_relative_eq!(series.coeffs[0], 2.0, epsilon = 1e-14);
        for &c in &series.coeffs[1..] {
            assert!(c.abs() < 1e-14);
        }
    }

    #[test]
    fn linear_function_is_t1() {
        let grid = ChebyshevGrid::new(6, (-1.0, 1.0)).unwrap();
        let samples: Vec<f64> = grid.nodes.clone();
        let series = grid.interpolate(&samples).unwrap();
        assert_relative_eq!(series.coeffs[1], 1.0, epsilon = 1e-14);
        assert!(series.coeffs[0].abs() < 1e-14);
        for &c in &series.coeffs[2..] {
            assert!(c.abs() < 1e-14);
        }
    }

    #[test]
    fn reproduces_samples_at_nodes() {
        let grid = ChebyshevGrid::new(11, (-2.5, 1.5)).unwrap();
        let f = |x: f64| (1.3 * x).sin() + 0.2 * x * x;
        let samples: Vec<f64> = grid.nodes.iter().map(|&x| f(x)).collect();
        let series = grid.interpolate(&samples).unwrap();
        let back = series.evaluate(&grid.nodes).unwrap();
        let scale = samples.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        for (got, want) in back.iter().zip(&samples) {
            assert!((got - want).abs() <= 1e-13 * scale.max(1.0));
        }
    }

    #[test]
    fn cubic_exact_with_four_nodes() {
        let grid = ChebyshevGrid::new(4, (-1.0, 3.0)).unwrap();
        let f = |x: f64| 2.0 * x * x * x - x * x + 0.5 * x - 4.0;
        let samples: Vec<f64> = grid.nodes.iter().map(|&x| f(x)).collect();
        let series = grid.interpolate(&samples).unwrap();
        for &x in &[-0.9, 0.0, 1.2, 2.9] {
            let got = series.evaluate(&[x]).unwrap()[0];
            assert_relative_eq!(got, f(x), max_relative = 1e-13);
        }
    }

    #[test]
    fn evaluation_is_linear_in_coefficients() {
        let grid = ChebyshevGrid::new(9, (-1.0, 1.0)).unwrap();
        let a: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..9).map(|i| (i as f64 * 1.3).cos()).collect();
        let (alpha, beta) = (1.7, -0.4);
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
        for &t in &[-0.8, -0.1, 0.33, 0.99] {
            let lhs = clenshaw_half_weight(&combo, t);
            let rhs = alpha * clenshaw_half_weight(&a, t) + beta * clenshaw_half_weight(&b, t);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-13);
        }
    }

    #[test]
    fn rejects_extrapolation() {
        let grid = ChebyshevGrid::new(4, (0.0, 1.0)).unwrap();
        let series = grid.interpolate(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(series.evaluate(&[1.5]).is_err());
        assert!(series.evaluate(&[-0.5]).is_err());
    }

    #[test]
    fn gaussian_bound_values() {
        // 1/(sqrt(6!) (2 sqrt 2)^6) = 1/(sqrt(720) * 512)
        let want = 1.0 / (720.0f64.sqrt() * 512.0);
        assert_relative_eq!(gaussian_cheb_bound(1.0, 6), want, max_relative = 1e-12);
        // eta = 1, P = 17 gives ~15 digits
        let b17 = gaussian_cheb_bound(1.0, 17);
        assert!(b17 < 5e-15 && b17 > 1e-16, "got {b17:e}");
        // eta = 1/2, P = 23 also lands at the 1e-15 scale
        let b23 = gaussian_cheb_bound(0.5, 23);
        assert!(b23 < 5e-15 && b23 > 1e-16, "got {b23:e}");
    }

    /// The Theorem-style bound actually dominates the measured interpolation
    /// error of a Gaussian for every tested (eta, P).
    #[test]
    fn gaussian_interpolation_error_below_bound() {
        let lz = 2.0;
        for &eta in &[0.5, 1.0, 2.0] {
            let s = eta * lz;
            for p in 4..=24 {
                let grid = ChebyshevGrid::new(p, (-lz / 2.0, lz / 2.0)).unwrap();
                let samples: Vec<f64> =
                    grid.nodes.iter().map(|&z| (-z * z / (s * s)).exp()).collect();
                let series = grid.interpolate(&samples).unwrap();
                let mut max_err = 0.0f64;
                for k in 0..=2000 {
                    let z = -lz / 2.0 + lz * k as f64 / 2000.0;
                    let got = clenshaw_half_weight(&series.coeffs, 2.0 * z / lz);
                    max_err = max_err.max((got - (-z * z / (s * s)).exp()).abs());
                }
                // The stated bound drops a constant ~2 from the node
                // polynomial maximum; the additive floor covers rounding of
                // the samples and the Clenshaw recurrence.
                let bound = 2.0 * gaussian_cheb_bound(eta, p) + 8e-15;
                assert!(
                    max_err <= bound,
                    "eta={eta} P={p}: err {max_err:e} > bound {bound:e}"
                );
            }
        }
    }
}
