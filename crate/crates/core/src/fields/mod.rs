//! Coefficient vector fields `A_0, A_1, ..., A_N` on `R^d`.
//!
//! A [`VectorField`] is an immutable, thread-safe closure together with an
//! optional analytic Jacobian. Fields without an analytic Jacobian fall back
//! to central finite differences with step `1e-5 * (1 + |x|)`.

mod cutoff;
pub mod families;
mod profile;

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::norm;

pub use cutoff::CutoffFunction;
pub use profile::{
    ball_sample_points, check_hypothesis_h, nested_profiles, profile_lipschitz, sampled_profile,
    spectral_norm, HypothesisConstants, HypothesisLine, LipschitzProfile, HYPOTHESIS_SLACK,
};

/// `f(x, out)` writes the field value at `x` into `out`.
pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `j(x, out)` writes the row-major `d x d` Jacobian, `out[r * d + c] = dA_r/dx_c`.
pub type JacobianFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `f(z, c, out)` writes `A_0(z) + sum_i c_i A_i(z)` in one pass.
pub type DrivenFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Closed-form suprema over `B(m)`, used to anchor sampled profiles.
pub type ProfileFn = Arc<dyn Fn(f64) -> LipschitzProfile + Send + Sync>;

/// Relative step of the central finite-difference Jacobian.
pub const FD_STEP: f64 = 1e-5;

/// A smooth map `R^d -> R^d`.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: FieldFn,
    jacobian: Option<JacobianFn>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim,
            eval: Arc::new(f),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, j: J) -> Self
    where
        J: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(j));
        self
    }

    /// Field that vanishes identically.
    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![0.0; dim])
    }

    pub fn constant(value: Vec<f64>) -> Self {
        let dim = value.len();
        let v = value.clone();
        Self::new(dim, move |_, out| out.copy_from_slice(&v))
            .with_jacobian(|_, out| out.fill(0.0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Evaluates without any checks. Used by the hot integrator loops after
    /// the caller has validated dimensions.
    #[inline]
    pub(crate) fn eval_raw(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.eval)(x, out);
        check_finite(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Analytic Jacobian when available, finite differences otherwise.
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.jacobian {
            Some(j) => {
                j(x, out);
                check_finite(x, out)
            }
            None => self.fd_jacobian_into(x, out),
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim * self.dim];
        self.jacobian_into(x, &mut out)?;
        Ok(out)
    }

    /// Central finite-difference Jacobian, regardless of any analytic one.
    pub fn fd_jacobian_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        let h = FD_STEP * (1.0 + norm(x));
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for c in 0..d {
            xp[c] = x[c] + h;
            self.eval_into(&xp, &mut fp)?;
            xp[c] = x[c] - h;
            self.eval_into(&xp, &mut fm)?;
            xp[c] = x[c];
            for r in 0..d {
                out[r * d + c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        Ok(())
    }

    pub fn fd_jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim * self.dim];
        self.fd_jacobian_into(x, &mut out)?;
        Ok(out)
    }

    /// `phi * A`, with Jacobian `phi A' + A (grad phi)^T`.
    pub fn truncated(&self, cutoff: CutoffFunction) -> VectorField {
        let inner = self.clone();
        let inner_j = self.clone();
        let d = self.dim;
        VectorField::new(d, move |x, out| {
            let phi = cutoff.value(x);
            inner.eval_raw(x, out);
            for v in out.iter_mut() {
                *v *= phi;
            }
        })
        .with_jacobian(move |x, out| {
            let phi = cutoff.value(x);
            let mut a = vec![0.0; d];
            let mut grad = vec![0.0; d];
            inner_j.eval_raw(x, &mut a);
            cutoff.gradient_into(x, &mut grad);
            // A NaN written here is caught by the caller's finiteness check.
            if inner_j.jacobian_into(x, out).is_err() {
                out.fill(f64::NAN);
                return;
            }
            for r in 0..d {
                for c in 0..d {
                    out[r * d + c] = phi * out[r * d + c] + a[r] * grad[c];
                }
            }
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

#[inline]
fn check_finite(x: &[f64], out: &[f64]) -> Result<()> {
    if out.iter().all(|v| v.is_finite()) {
        return Ok(());
    }
    let overflow = out.iter().all(|v| !v.is_nan()) || x.iter().any(|v| !v.is_finite());
    Err(Error::Domain {
        point: x.to_vec(),
        overflow,
    })
}

/// The coefficients of `dx = sum_i A_i(x) o dw^i + A_0(x) dt`.
#[derive(Clone)]
pub struct VectorFieldSystem {
    label: String,
    dim_state: usize,
    drift: VectorField,
    diffusions: Vec<VectorField>,
    closed_form: Option<ProfileFn>,
    driven: Option<DrivenFn>,
    linear: Option<Arc<LinearCoefficients>>,
}

/// Row-major `d x d` matrices of a linear system `A_k(x) = M_k x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoefficients {
    pub drift: Vec<f64>,
    pub diffusions: Vec<Vec<f64>>,
}

impl fmt::Debug for VectorFieldSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldSystem")
            .field("label", &self.label)
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.diffusions.len())
            .finish()
    }
}

impl VectorFieldSystem {
    pub fn new(drift: VectorField, diffusions: Vec<VectorField>) -> Result<Self> {
        let d = drift.dim();
        if d == 0 {
            return Err(invalid("state dimension must be positive"));
        }
        if diffusions.is_empty() {
            return Err(invalid("at least one diffusion field is required"));
        }
        for f in &diffusions {
            if f.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: f.dim(),
                });
            }
        }
        Ok(Self {
            label: "custom".into(),
            dim_state: d,
            drift,
            diffusions,
            closed_form: None,
            driven: None,
            linear: None,
        })
    }

    /// Attach a fused evaluation of `A_0(z) + sum_i c_i A_i(z)`. It must agree
    /// with the individual fields; the solvers prefer it in their inner loop.
    pub fn with_driven_rhs<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.driven = Some(Arc::new(f));
        self
    }

    pub(crate) fn with_linear_coefficients(mut self, coeffs: LinearCoefficients) -> Self {
        self.linear = Some(Arc::new(coeffs));
        self
    }

    /// The matrices of a linear system, when known.
    pub fn linear_coefficients(&self) -> Option<&LinearCoefficients> {
        self.linear.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Attach closed-form suprema; [`profile_lipschitz`] then reports the
    /// entrywise maximum of sampled and closed-form values.
    pub fn with_closed_form_profile<F>(mut self, f: F) -> Self
    where
        F: Fn(f64) -> LipschitzProfile + Send + Sync + 'static,
    {
        self.closed_form = Some(Arc::new(f));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.diffusions.len()
    }

    pub fn drift(&self) -> &VectorField {
        &self.drift
    }

    pub fn diffusions(&self) -> &[VectorField] {
        &self.diffusions
    }

    /// `A_k` with `k = 0` the drift and `k = 1..=N` the diffusions.
    pub fn field(&self, k: usize) -> Result<&VectorField> {
        if k == 0 {
            Ok(&self.drift)
        } else {
            self.diffusions
                .get(k - 1)
                .ok_or_else(|| invalid(format!("field index {k} out of range 0..={}", self.dim_noise())))
        }
    }

    pub fn closed_form_profile(&self, m: f64) -> Option<LipschitzProfile> {
        self.closed_form.as_ref().map(|f| f(m))
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim_state {
            return Err(Error::Dimension {
                expected: self.dim_state,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain {
                point: x.to_vec(),
                overflow: true,
            });
        }
        Ok(())
    }

    /// Bracket field `B_{i,k}(x) = A_i'(x) A_k(x)` for `i in 1..=N`, `k in 0..=N`.
    pub fn evaluate_bracket(&self, i: usize, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        if i == 0 || i > self.dim_noise() {
            return Err(invalid(format!("bracket index i={i} must lie in 1..={}", self.dim_noise())));
        }
        self.check_point(x)?;
        let d = self.dim_state;
        let mut jac = vec![0.0; d * d];
        let mut ak = vec![0.0; d];
        let mut out = vec![0.0; d];
        self.bracket_into(i, k, x, &mut jac, &mut ak, &mut out)?;
        Ok(out)
    }

    fn bracket_into(
        &self,
        i: usize,
        k: usize,
        x: &[f64],
        jac: &mut [f64],
        ak: &mut [f64],
        out: &mut [f64],
    ) -> Result<()> {
        let d = self.dim_state;
        self.field(k)?.eval_into(x, ak)?;
        self.diffusions[i - 1].jacobian_into(x, jac)?;
        matvec(d, jac, ak, out);
        check_finite(x, out)
    }

    /// Itô drift `A_0 + 1/2 sum_i B_{i,i}`.
    pub fn stratonovich_correction(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim_state];
        let mut scratch = CorrectionScratch::new(self.dim_state);
        self.stratonovich_correction_into(x, &mut out, &mut scratch)?;
        Ok(out)
    }

    pub(crate) fn stratonovich_correction_into(
        &self,
        x: &[f64],
        out: &mut [f64],
        s: &mut CorrectionScratch,
    ) -> Result<()> {
        self.drift.eval_into(x, out)?;
        for i in 1..=self.dim_noise() {
            self.bracket_into(i, i, x, &mut s.jac, &mut s.ak, &mut s.b)?;
            for (o, b) in out.iter_mut().zip(&s.b) {
                *o += 0.5 * b;
            }
        }
        Ok(())
    }

    /// `B_{i,k}` as a standalone field (finite-difference Jacobian).
    pub fn bracket_field(&self, i: usize, k: usize) -> Result<VectorField> {
        if i == 0 || i > self.dim_noise() || k > self.dim_noise() {
            return Err(invalid(format!("bracket index ({i},{k}) out of range")));
        }
        let sys = self.clone();
        let d = self.dim_state;
        Ok(VectorField::new(d, move |x, out| {
            let mut jac = vec![0.0; d * d];
            let mut ak = vec![0.0; d];
            if sys.bracket_into(i, k, x, &mut jac, &mut ak, out).is_err() {
                out.fill(f64::NAN);
            }
        }))
    }

    /// The corrected drift as a standalone field (finite-difference Jacobian).
    pub fn corrected_drift_field(&self) -> VectorField {
        let sys = self.clone();
        let d = self.dim_state;
        VectorField::new(d, move |x, out| {
            let mut s = CorrectionScratch::new(d);
            if sys.stratonovich_correction_into(x, out, &mut s).is_err() {
                out.fill(f64::NAN);
            }
        })
    }

    /// Multiply every field, drift included, by the cutoff `phi_m`.
    pub fn truncate(&self, m: f64) -> Result<VectorFieldSystem> {
        let cutoff = CutoffFunction::new(m)?;
        Ok(VectorFieldSystem {
            label: format!("{}|cutoff({m})", self.label),
            dim_state: self.dim_state,
            drift: self.drift.truncated(cutoff),
            diffusions: self.diffusions.iter().map(|f| f.truncated(cutoff)).collect(),
            closed_form: None,
            driven: None,
            linear: None,
        })
    }

    /// `out = A_0(z) + sum_i slopes[i] * A_i(z)`.
    #[inline]
    pub(crate) fn driven_rhs(
        &self,
        z: &[f64],
        slopes: &[f64],
        out: &mut [f64],
        tmp: &mut [f64],
    ) -> Result<()> {
        if let Some(f) = &self.driven {
            f(z, slopes, out);
            return check_finite(z, out);
        }
        self.driven_rhs_unfused(z, slopes, out, tmp)
    }

    pub(crate) fn driven_rhs_unfused(
        &self,
        z: &[f64],
        slopes: &[f64],
        out: &mut [f64],
        tmp: &mut [f64],
    ) -> Result<()> {
        self.drift.eval_raw(z, out);
        for (field, &c) in self.diffusions.iter().zip(slopes) {
            field.eval_raw(z, tmp);
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o += c * t;
            }
        }
        check_finite(z, out)
    }
}

pub(crate) struct CorrectionScratch {
    jac: Vec<f64>,
    ak: Vec<f64>,
    b: Vec<f64>,
}

impl CorrectionScratch {
    pub(crate) fn new(d: usize) -> Self {
        Self {
            jac: vec![0.0; d * d],
            ak: vec![0.0; d],
            b: vec![0.0; d],
        }
    }
}

#[inline]
fn matvec(d: usize, m: &[f64], v: &[f64], out: &mut [f64]) {
    for r in 0..d {
        out[r] = (0..d).map(|c| m[r * d + c] * v[c]).sum();
    }
}
