use crate::error::{invalid, Result};
use crate::norm;

/// Radial smooth cutoff: `1` on `B(m)`, `0` outside `B(m + 2)`.
///
/// With `s = (|x| - m) / 2` clamped to `[0, 1]` the profile is
/// `1 - (10 s^3 - 15 s^4 + 6 s^5)`. It is C^2, its gradient norm peaks at
/// `15/16` and its Hessian norm stays below `2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffFunction {
    inner_radius: f64,
}

impl CutoffFunction {
    pub fn new(inner_radius: f64) -> Result<Self> {
        if !(inner_radius >= 1.0) || !inner_radius.is_finite() {
            return Err(invalid(format!("cutoff radius must be >= 1, got {inner_radius}")));
        }
        Ok(Self { inner_radius })
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn outer_radius(&self) -> f64 {
        self.inner_radius + 2.0
    }

    fn s(&self, r: f64) -> f64 {
        ((r - self.inner_radius) / 2.0).clamp(0.0, 1.0)
    }

    pub fn radial_value(&self, r: f64) -> f64 {
        if r <= self.inner_radius {
            return 1.0;
        }
        let s = self.s(r);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }

    /// `d phi / dr`.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        let s = self.s(r);
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        -15.0 * s * s * (1.0 - s) * (1.0 - s)
    }

    /// `d^2 phi / dr^2`.
    pub fn radial_second_derivative(&self, r: f64) -> f64 {
        let s = self.s(r);
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        -(60.0 * s - 180.0 * s * s + 120.0 * s * s * s) / 4.0
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        self.radial_value(norm(x))
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let r = norm(x);
        let dphi = self.radial_derivative(r);
        if dphi == 0.0 {
            out.fill(0.0);
            return;
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = dphi * xi / r;
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.gradient_into(x, &mut out);
        out
    }

    /// Operator norm of the Hessian of a radial function:
    /// `max(|phi''(r)|, |phi'(r)| / r)` (the tangential eigenvalue only exists for d >= 2).
    pub fn hessian_norm(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        let radial = self.radial_second_derivative(r).abs();
        if x.len() < 2 || r == 0.0 {
            return radial;
        }
        radial.max(self.radial_derivative(r).abs() / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        let c = CutoffFunction::new(3.0).unwrap();
        assert_eq!(c.value(&[0.0, 0.0]), 1.0);
        assert_eq!(c.value(&[3.0, 0.0]), 1.0);
        assert_eq!(c.value(&[0.0, 5.0]), 0.0);
        assert_eq!(c.value(&[10.0, 5.0]), 0.0);
        assert_eq!(c.value(&[4.0, 0.0]), 0.5);
        assert_eq!(c.outer_radius(), 5.0);
    }

    #[test]
    fn rejects_small_radius() {
        assert!(CutoffFunction::new(0.99).is_err());
        assert!(CutoffFunction::new(f64::NAN).is_err());
    }

    #[test]
    fn derivative_bounds_on_dense_radial_samples() {
        let c = CutoffFunction::new(1.0).unwrap();
        let samples = 100_000;
        let mut max_grad: f64 = 0.0;
        let mut max_hess: f64 = 0.0;
        for k in 0..=samples {
            let r = 4.0 * k as f64 / samples as f64;
            let v = c.radial_value(r);
            assert!((0.0..=1.0).contains(&v));
            max_grad = max_grad.max(c.gradient(&[r, 0.0]).iter().map(|g| g * g).sum::<f64>().sqrt());
            max_hess = max_hess.max(c.hessian_norm(&[r, 0.0]));
        }
        assert!(max_grad <= 1.0);
        assert!((max_grad - 15.0 / 16.0).abs() < 1e-6);
        assert!(max_hess <= 2.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let c = CutoffFunction::new(2.0).unwrap();
        for k in 1..40 {
            let r = 2.0 + 2.0 * k as f64 / 40.0;
            let h = 1e-6;
            let fd = (c.radial_value(r + h) - c.radial_value(r - h)) / (2.0 * h);
            assert!((fd - c.radial_derivative(r)).abs() < 1e-7);
            let fd2 = (c.radial_derivative(r + h) - c.radial_derivative(r - h)) / (2.0 * h);
            assert!((fd2 - c.radial_second_derivative(r)).abs() < 1e-6);
        }
    }
}
