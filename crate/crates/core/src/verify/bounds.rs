//! Closed-form right-hand sides of the moment inequalities.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Growth, Lipschitz and bracket constants feeding the bound evaluators.
///
/// `c1`, `c2` bound the diffusion and drift under bounded growth; `c3`, `c4`
/// under linear growth; `l1`, `l2` are global Lipschitz constants of the
/// diffusions and drift; `k1`, `k2` those of the bracket fields; `universal_c`
/// is the unspecified absolute constant of the martingale inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub l1: f64,
    pub l2: f64,
    pub k1: f64,
    pub k2: f64,
    pub delta0: Option<f64>,
    pub p: f64,
    pub n: u32,
    pub noise_dim: usize,
    pub universal_c: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
            c4: 0.0,
            l1: 0.0,
            l2: 0.0,
            k1: 0.0,
            k2: 0.0,
            delta0: None,
            p: 2.0,
            n: 1,
            noise_dim: 1,
            universal_c: 1.0,
        }
    }
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("l1", self.l1),
            ("l2", self.l2),
            ("k1", self.k1),
            ("k2", self.k2),
            ("p", self.p),
            ("universal_c", self.universal_c),
            ("delta0", self.delta0.unwrap_or(0.0)),
        ];
        for (name, v) in named {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("constant {name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

fn need_p(p: f64, min: f64, strict: bool) -> Result<()> {
    let ok = if strict { p > min } else { p >= min };
    if !ok || !p.is_finite() {
        let rel = if strict { ">" } else { ">=" };
        return Err(invalid(format!("moment order must be {rel} {min}, got {p}")));
    }
    Ok(())
}

/// `||Y_1(x)||_p <= (1 + C c1 sqrt(p)) e^{c2} (1 + |x|)` under bounded diffusion.
pub fn bound_one_point_bounded(k: &BoundConstants, p: f64, x_norm: f64) -> Result<f64> {
    need_p(p, 1.0, true)?;
    Ok((1.0 + k.universal_c * k.c1 * p.sqrt()) * k.c2.exp() * (1.0 + x_norm))
}

/// `(beta1, beta2)` with `beta1 = sqrt(3) e^{3 c_drift^2}` and
/// `beta2 = (3/2) C^2 c_diff^2`, read off the Gronwall conclusion
/// `phi^2 + 1 <= 3 (1 + |x|)^2 exp(3 (C^2 c_diff^2 p + 2 c_drift^2))`.
pub fn linear_growth_coefficients(universal_c: f64, c_diff: f64, c_drift: f64) -> (f64, f64) {
    (
        3f64.sqrt() * (3.0 * c_drift * c_drift).exp(),
        1.5 * universal_c * universal_c * c_diff * c_diff,
    )
}

/// `||Y_1(x)||_p <= beta1 e^{beta2 p} (1 + |x|)` under linear growth (`c3`, `c4`).
pub fn bound_one_point_linear_growth(k: &BoundConstants, p: f64, x_norm: f64) -> Result<f64> {
    need_p(p, 1.0, true)?;
    let (b1, b2) = linear_growth_coefficients(k.universal_c, k.c3, k.c4);
    Ok(b1 * (b2 * p).exp() * (1.0 + x_norm))
}

/// `E Y_1(x, y)^p <= 2^p |x - y|^p e^{C l1^2 p^2 + l2^2 p}`.
pub fn bound_two_point_sup(k: &BoundConstants, p: f64, dist: f64) -> Result<f64> {
    need_p(p, 1.0, true)?;
    Ok(2f64.powf(p) * dist.powf(p) * (k.universal_c * k.l1 * k.l1 * p * p + k.l2 * k.l2 * p).exp())
}

/// `E|x_t(x) - x_t(y)|^{2p} <= |x - y|^{2p} e^{2 p^2 l1^2 + 2 p l2}` for every `t` in `[0, 1]`.
pub fn bound_two_point_fixed_time(k: &BoundConstants, p: f64, dist: f64, t: f64) -> Result<f64> {
    need_p(p, 2.0, false)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("time {t} outside [0, 1]")));
    }
    Ok(dist.powf(2.0 * p) * (2.0 * p * p * k.l1 * k.l1 + 2.0 * p * k.l2).exp())
}

/// Discretization constant of the regularized two-point bound, using `k.p`,
/// `k.n`, `k.noise_dim`, `k.universal_c`, `l1`, `l2`, `k1`, `k2`.
pub fn alpha_n(k: &BoundConstants) -> Result<f64> {
    alpha_n_with(k.p, k.n, k.noise_dim, k.universal_c, k.l1, k.l2, k.k1, k.k2)
}

#[allow(clippy::too_many_arguments)]
pub fn alpha_n_with(p: f64, n: u32, noise: usize, c: f64, l1: f64, l2: f64, k1: f64, k2: f64) -> Result<f64> {
    need_p(p, 2.0, false)?;
    if n == 0 || noise == 0 {
        return Err(invalid("alpha_n needs n >= 1 and N >= 1"));
    }
    let nn = noise as f64;
    let two_n = 2f64.powi(noise as i32);
    let h = (-(n as f64)).exp2();
    let growth = (8.0 * p * p * nn * h * l1 * l1).exp();
    let drift = (2.0 * p * h * l2).exp();
    let first = 2.0 * p * ((2.0 * p - 1.0) * l1 * l1 + k1) * (4.0 * c * c * nn * nn * two_n * growth) * drift;
    let second = h.sqrt() * 2.0 * p * ((2.0 * p - 1.0) * l1 * l2 + k2) * (2.0 * c * nn * two_n * growth) * drift;
    Ok(first + second)
}

/// `E|x^n_t(x) - x^n_t(y)|^{2p} <= |x - y|^{2p} e^{2 p l2} e^{alpha_n}`.
pub fn bound_regularized_two_point(k: &BoundConstants, dist: f64) -> Result<f64> {
    Ok(dist.powf(2.0 * k.p) * (2.0 * k.p * k.l2).exp() * alpha_n(k)?.exp())
}

/// Growth bound `c_p ((beta1 + gamma1) log(m + 2) + 1)` on the discretization
/// constant of the doubly truncated system. `gamma1` is an explicit input.
pub fn alpha_truncated_growth_bound(c_p: f64, beta1: f64, gamma1: f64, m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(invalid("truncation radius must be nonnegative"));
    }
    Ok(c_p * ((beta1 + gamma1) * (m + 2.0).ln() + 1.0))
}

/// `delta_0 = 1 / (2 beta^2 e (1 + R)^2)` for the exponential-moment bound,
/// with `beta = max ||Y_1||_p / (sqrt(p) (1 + |x|))` over the supplied
/// `(p, norm, |x|)` triples.
pub fn fit_delta0(norms: &[(f64, f64, f64)], radius: f64) -> Result<(f64, f64)> {
    if norms.is_empty() {
        return Err(invalid("delta_0 fit needs at least one moment norm"));
    }
    let mut beta: f64 = 0.0;
    for &(p, norm, x) in norms {
        need_p(p, 1.0, true)?;
        beta = beta.max(norm / (p.sqrt() * (1.0 + x)));
    }
    if !(beta > 0.0) {
        return Err(invalid("moment norms must be positive"));
    }
    Ok((beta, 1.0 / (2.0 * beta * beta * E * (1.0 + radius).powi(2))))
}
