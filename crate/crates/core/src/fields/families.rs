//! Built-in coefficient families.
//!
//! Each constructor returns a fully specified [`VectorFieldSystem`] with
//! analytic Jacobians. Families whose suprema over balls have a closed form
//! also carry a closed-form [`LipschitzProfile`].

use std::f64::consts::{E, FRAC_PI_4};

use super::{spectral_norm, LinearCoefficients, LipschitzProfile, VectorField, VectorFieldSystem};
use crate::error::{invalid, Result};

/// `A_i = a_i`, `A_0 = a_0`.
pub fn constant(drift: Vec<f64>, diffusions: Vec<Vec<f64>>) -> Result<VectorFieldSystem> {
    let d = drift.len();
    let c2 = crate::norm(&drift);
    let c1_sq: f64 = diffusions.iter().map(|a| a.iter().map(|v| v * v).sum::<f64>()).sum();
    let fields = diffusions.into_iter().map(VectorField::constant).collect();
    if d == 0 {
        return Err(invalid("constant family needs a non-empty drift vector"));
    }
    Ok(VectorFieldSystem::new(VectorField::constant(drift), fields)?
        .with_label("constant")
        .with_closed_form_profile(move |m| LipschitzProfile {
            radius: m,
            sup_diffusion_sq: c1_sq,
            sup_drift: c2,
            lip_diffusion_sq: 0.0,
            lip_drift: 0.0,
            bracket_lip_offdiag: 0.0,
            bracket_lip_drift: 0.0,
        }))
}

fn matmul(d: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = (0..d).map(|k| a[r * d + k] * b[k * d + c]).sum();
        }
    }
    out
}

fn linear_field(d: usize, m: Vec<f64>) -> VectorField {
    let mj = m.clone();
    VectorField::new(d, move |x, out| {
        for r in 0..d {
            out[r] = (0..d).map(|c| m[r * d + c] * x[c]).sum();
        }
    })
    .with_jacobian(move |_, out| out.copy_from_slice(&mj))
}

/// `A_k(x) = M_k x` with row-major `d x d` matrices.
pub fn linear(d: usize, drift: Vec<f64>, diffusions: Vec<Vec<f64>>) -> Result<VectorFieldSystem> {
    if d == 0 || drift.len() != d * d || diffusions.iter().any(|m| m.len() != d * d) {
        return Err(invalid(format!("linear family expects {d}x{d} matrices")));
    }
    if diffusions.is_empty() {
        return Err(invalid("linear family needs at least one diffusion matrix"));
    }
    let op = |m: &[f64]| spectral_norm(d, m);
    let diff_norm_sq: f64 = diffusions.iter().map(|m| op(m).powi(2)).sum();
    let drift_norm = op(&drift);
    let mut corrected = drift.clone();
    for m in &diffusions {
        for (c, v) in corrected.iter_mut().zip(matmul(d, m, m)) {
            *c += 0.5 * v;
        }
    }
    let corrected_norm = op(&corrected);
    let mut j1: f64 = 0.0;
    let mut j2: f64 = 0.0;
    for mi in &diffusions {
        for mk in &diffusions {
            j1 = j1.max(op(&matmul(d, mi, mk)).powi(2));
        }
        j2 = j2.max(op(&matmul(d, mi, &drift)));
    }
    let coeffs = LinearCoefficients {
        drift: drift.clone(),
        diffusions: diffusions.clone(),
    };
    let fields = diffusions.into_iter().map(|m| linear_field(d, m)).collect();
    Ok(VectorFieldSystem::new(linear_field(d, drift), fields)?
        .with_label("linear")
        .with_linear_coefficients(coeffs)
        .with_closed_form_profile(move |m| LipschitzProfile {
            radius: m,
            sup_diffusion_sq: diff_norm_sq * m * m,
            sup_drift: drift_norm * m,
            lip_diffusion_sq: diff_norm_sq,
            lip_drift: corrected_norm,
            bracket_lip_offdiag: j1,
            bracket_lip_drift: j2,
        }))
}

/// One-dimensional geometric motion `dx = sigma x o dw + mu x dt`.
pub fn geometric(sigma: f64, mu: f64) -> Result<VectorFieldSystem> {
    Ok(linear(1, vec![mu], vec![vec![sigma]])?.with_label("geometric"))
}

/// Planar rotation noise `A_1(x) = sigma (-x_2, x_1)`, linear drift `A_0 = mu x`.
pub fn rotation(sigma: f64, mu: f64) -> Result<VectorFieldSystem> {
    Ok(linear(2, vec![mu, 0.0, 0.0, mu], vec![vec![0.0, -sigma, sigma, 0.0]])?.with_label("rotation"))
}

/// Bounded trigonometric fields with bounded derivatives of every order:
/// `A_i(x)_j = a sin(x_{(i+j) mod d} + i pi/4)`, `A_0(x)_j = b cos(x_j)`.
pub fn trigonometric(amplitude: f64, drift_amplitude: f64, d: usize, n: usize) -> Result<VectorFieldSystem> {
    if d == 0 || n == 0 {
        return Err(invalid("trigonometric family needs d, N >= 1"));
    }
    let diffusions = (0..n)
        .map(|i| {
            let phase = i as f64 * FRAC_PI_4;
            VectorField::new(d, move |x, out| {
                for j in 0..d {
                    out[j] = amplitude * (x[(i + j) % d] + phase).sin();
                }
            })
            .with_jacobian(move |x, out| {
                out.fill(0.0);
                for j in 0..d {
                    let c = (i + j) % d;
                    out[j * d + c] = amplitude * (x[c] + phase).cos();
                }
            })
        })
        .collect();
    let b = drift_amplitude;
    let drift = VectorField::new(d, move |x, out| {
        for j in 0..d {
            out[j] = b * x[j].cos();
        }
    })
    .with_jacobian(move |x, out| {
        out.fill(0.0);
        for j in 0..d {
            out[j * d + j] = -b * x[j].sin();
        }
    });
    Ok(VectorFieldSystem::new(drift, diffusions)?.with_label("trigonometric"))
}

/// Parameters of the logarithmic-growth family.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogGrowthParams {
    /// Diffusion scale.
    pub sigma: f64,
    /// Spatial frequency of the bounded modulation `u_i`.
    pub omega: f64,
    /// Strength of the inward drift.
    pub mu: f64,
}

impl Default for LogGrowthParams {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            omega: 1.0,
            mu: 0.5,
        }
    }
}

#[inline]
fn log_weight(x: &[f64]) -> (f64, f64) {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    ((E + r2).ln(), r2)
}

/// Fields growing like the admissible logarithmic rates:
///
/// * `A_i(x)_j = sigma sqrt(g(x)) cos(omega x_{(i+j) mod d} + (i + 2j) pi/4)`
/// * `A_0(x) = -mu g(x) x / sqrt(1 + |x|^2)`
///
/// with `g(x) = log(e + |x|^2)`. The modulation is bounded and smooth, and
/// the drift points inward with logarithmic magnitude.
pub fn log_growth(params: &LogGrowthParams, d: usize, n: usize) -> Result<VectorFieldSystem> {
    if d == 0 || n == 0 {
        return Err(invalid("log-growth family needs d, N >= 1"));
    }
    let LogGrowthParams { sigma, omega, mu } = *params;
    if !(sigma.is_finite() && omega.is_finite() && mu.is_finite()) {
        return Err(invalid("log-growth parameters must be finite"));
    }
    let phase = |i: usize, j: usize| (i + 2 * j) as f64 * FRAC_PI_4;
    let diffusions = (0..n)
        .map(|i| {
            VectorField::new(d, move |x, out| {
                let amp = sigma * log_weight(x).0.sqrt();
                for j in 0..d {
                    out[j] = amp * (omega * x[(i + j) % d] + phase(i, j)).cos();
                }
            })
            .with_jacobian(move |x, out| {
                let (g, r2) = log_weight(x);
                let sg = g.sqrt();
                for j in 0..d {
                    let k = (i + j) % d;
                    let arg = omega * x[k] + phase(i, j);
                    let u = arg.cos();
                    for c in 0..d {
                        let mut v = u * x[c] / (sg * (E + r2));
                        if c == k {
                            v -= sg * omega * arg.sin();
                        }
                        out[j * d + c] = sigma * v;
                    }
                }
            })
        })
        .collect();
    let drift = VectorField::new(d, move |x, out| {
        let (g, r2) = log_weight(x);
        let h = g / (1.0 + r2).sqrt();
        for j in 0..d {
            out[j] = -mu * h * x[j];
        }
    })
    .with_jacobian(move |x, out| {
        let (g, r2) = log_weight(x);
        let s = (1.0 + r2).sqrt();
        let h = g / s;
        for j in 0..d {
            for c in 0..d {
                let dh = 2.0 * x[c] / ((E + r2) * s) - g * x[c] / (s * s * s);
                let mut v = x[j] * dh;
                if j == c {
                    v += h;
                }
                out[j * d + c] = -mu * v;
            }
        }
    });
    Ok(VectorFieldSystem::new(drift, diffusions)?
        .with_label("log-growth")
        .with_driven_rhs(move |x, c, out| {
            let (g, r2) = log_weight(x);
            let h = -mu * g / (1.0 + r2).sqrt();
            let amp = sigma * g.sqrt();
            for j in 0..d {
                out[j] = h * x[j];
            }
            for (i, ci) in c.iter().enumerate() {
                let a = amp * ci;
                for j in 0..d {
                    out[j] += a * (omega * x[(i + j) % d] + phase(i, j)).cos();
                }
            }
        }))
}

/// Quadratic drift `A_0(x)_j = x_j^2` with constant noise `A_1 = sigma (1, ..., 1)`.
/// Its deterministic part blows up at `t = 1 / x_0` for `x_0 > 0`.
pub fn explosive(d: usize, sigma: f64) -> Result<VectorFieldSystem> {
    if d == 0 {
        return Err(invalid("explosive family needs d >= 1"));
    }
    let drift = VectorField::new(d, |x, out| {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v * v;
        }
    })
    .with_jacobian(move |x, out| {
        out.fill(0.0);
        for j in 0..d {
            out[j * d + j] = 2.0 * x[j];
        }
    });
    Ok(VectorFieldSystem::new(drift, vec![VectorField::constant(vec![sigma; d])])?.with_label("explosive"))
}
