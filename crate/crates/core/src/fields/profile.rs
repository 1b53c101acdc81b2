//! Local growth and Lipschitz profiles of a field system on balls `B(m)`,
//! and the finite-radius proxy for the logarithmic growth hypothesis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{VectorField, VectorFieldSystem};
use crate::error::{invalid, Result};

/// Suprema over `B(m)` of field sizes and Jacobian norms.
///
/// `bracket_lip_offdiag` stores the squared bracket norm, as in the growth
/// hypothesis; [`LipschitzProfile::bracket_lip_offdiag_unsquared`] gives the
/// plain norm used by the truncated-system constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProfile {
    pub radius: f64,
    /// `sum_i sup |A_i|^2`.
    pub sup_diffusion_sq: f64,
    /// `sup |A_0|`.
    pub sup_drift: f64,
    /// `sum_i sup ||A_i'||^2`.
    pub lip_diffusion_sq: f64,
    /// `sup ||(corrected A_0)'||`.
    pub lip_drift: f64,
    /// `max_{i,k >= 1} sup ||B_{ik}'||^2`.
    pub bracket_lip_offdiag: f64,
    /// `max_i sup ||B_{i0}'||`.
    pub bracket_lip_drift: f64,
}

impl LipschitzProfile {
    pub fn bracket_lip_offdiag_unsquared(&self) -> f64 {
        self.bracket_lip_offdiag.sqrt()
    }

    pub fn entries(&self) -> [f64; 6] {
        [
            self.sup_diffusion_sq,
            self.sup_drift,
            self.lip_diffusion_sq,
            self.lip_drift,
            self.bracket_lip_offdiag,
            self.bracket_lip_drift,
        ]
    }

    pub fn entrywise_max(&self, other: &LipschitzProfile) -> LipschitzProfile {
        LipschitzProfile {
            radius: self.radius.max(other.radius),
            sup_diffusion_sq: self.sup_diffusion_sq.max(other.sup_diffusion_sq),
            sup_drift: self.sup_drift.max(other.sup_drift),
            lip_diffusion_sq: self.lip_diffusion_sq.max(other.lip_diffusion_sq),
            lip_drift: self.lip_drift.max(other.lip_drift),
            bracket_lip_offdiag: self.bracket_lip_offdiag.max(other.bracket_lip_offdiag),
            bracket_lip_drift: self.bracket_lip_drift.max(other.bracket_lip_drift),
        }
    }
}

/// Largest singular value of a row-major `d x d` matrix.
pub fn spectral_norm(d: usize, m: &[f64]) -> f64 {
    match d {
        1 => m[0].abs(),
        2 => {
            // sigma_max^2 = (F + sqrt(F^2 - 4 det^2)) / 2 with F the squared Frobenius norm.
            let f: f64 = m.iter().map(|v| v * v).sum();
            let det = m[0] * m[3] - m[1] * m[2];
            let disc = (f * f - 4.0 * det * det).max(0.0);
            ((f + disc.sqrt()) / 2.0).sqrt()
        }
        _ => DMatrix::from_row_slice(d, d, m).singular_values().max(),
    }
}

/// Radial-shell sample of `B(m)`: shells every `1 / density` from the centre
/// plus the boundary sphere, times `density^(d-1)` directions (two in 1-D).
///
/// Shell radii sit on a fixed lattice, so for integer `m * density` the grid
/// of a ball is contained in the grid of every larger ball.
pub fn ball_sample_points(d: usize, m: f64, density: usize) -> Vec<Vec<f64>> {
    let mut radii: Vec<f64> = (0..)
        .map(|j| j as f64 / density as f64)
        .take_while(|r| *r < m)
        .collect();
    radii.push(m);
    let directions = sphere_directions(d, density);
    let mut points = vec![vec![0.0; d]];
    for r in radii.into_iter().filter(|r| *r > 0.0) {
        for u in &directions {
            points.push(u.iter().map(|c| c * r).collect());
        }
    }
    points
}

fn sphere_directions(d: usize, density: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::PI;
    if d == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    // Hyperspherical angles: d-2 polar angles in [0, pi], one azimuth in [0, 2 pi).
    let polar: Vec<f64> = (0..density)
        .map(|k| PI * (k as f64 + 0.5) / density as f64)
        .collect();
    let azimuth: Vec<f64> = (0..density)
        .map(|k| 2.0 * PI * k as f64 / density as f64)
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d - 1];
    loop {
        let mut v = vec![0.0; d];
        let mut sin_prod = 1.0;
        for a in 0..d - 2 {
            let th = polar[idx[a]];
            v[a] = sin_prod * th.cos();
            sin_prod *= th.sin();
        }
        let phi = azimuth[idx[d - 2]];
        v[d - 2] = sin_prod * phi.cos();
        v[d - 1] = sin_prod * phi.sin();
        out.push(v);
        let mut a = 0;
        loop {
            if a == d - 1 {
                return out;
            }
            idx[a] += 1;
            if idx[a] < density {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

fn jacobian_norm(f: &VectorField, x: &[f64], buf: &mut [f64]) -> Result<f64> {
    f.jacobian_into(x, buf)?;
    Ok(spectral_norm(f.dim(), buf))
}

/// Grid suprema only, without any closed-form override.
pub fn sampled_profile(sys: &VectorFieldSystem, m: f64, grid_density: usize) -> Result<LipschitzProfile> {
    if grid_density < 8 {
        return Err(invalid(format!("grid_density must be >= 8, got {grid_density}")));
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(invalid(format!("radius must be positive, got {m}")));
    }
    let d = sys.dim_state();
    let n = sys.dim_noise();
    let corrected = sys.corrected_drift_field();
    let brackets_offdiag: Vec<VectorField> = (1..=n)
        .flat_map(|i| (1..=n).map(move |k| (i, k)))
        .map(|(i, k)| sys.bracket_field(i, k))
        .collect::<Result<_>>()?;
    let brackets_drift: Vec<VectorField> = (1..=n).map(|i| sys.bracket_field(i, 0)).collect::<Result<_>>()?;

    let mut sup_diff = vec![0.0_f64; n];
    let mut lip_diff = vec![0.0_f64; n];
    let mut sup_drift: f64 = 0.0;
    let mut lip_drift: f64 = 0.0;
    let mut j1: f64 = 0.0;
    let mut j2: f64 = 0.0;
    let mut v = vec![0.0; d];
    let mut jac = vec![0.0; d * d];
    for x in ball_sample_points(d, m, grid_density) {
        for (i, f) in sys.diffusions().iter().enumerate() {
            f.eval_into(&x, &mut v)?;
            sup_diff[i] = sup_diff[i].max(v.iter().map(|c| c * c).sum());
            lip_diff[i] = lip_diff[i].max(jacobian_norm(f, &x, &mut jac)?.powi(2));
        }
        sys.drift().eval_into(&x, &mut v)?;
        sup_drift = sup_drift.max(crate::norm(&v));
        lip_drift = lip_drift.max(jacobian_norm(&corrected, &x, &mut jac)?);
        for b in &brackets_offdiag {
            j1 = j1.max(jacobian_norm(b, &x, &mut jac)?.powi(2));
        }
        for b in &brackets_drift {
            j2 = j2.max(jacobian_norm(b, &x, &mut jac)?);
        }
    }
    Ok(LipschitzProfile {
        radius: m,
        sup_diffusion_sq: sup_diff.iter().sum(),
        sup_drift,
        lip_diffusion_sq: lip_diff.iter().sum(),
        lip_drift,
        bracket_lip_offdiag: j1,
        bracket_lip_drift: j2,
    })
}

/// Suprema over `B(m)`: grid sampling, raised to the closed-form values when
/// the system carries them.
pub fn profile_lipschitz(sys: &VectorFieldSystem, m: f64, grid_density: usize) -> Result<LipschitzProfile> {
    let sampled = sampled_profile(sys, m, grid_density)?;
    Ok(match sys.closed_form_profile(m) {
        Some(exact) => sampled.entrywise_max(&exact),
        None => sampled,
    })
}

/// Profiles for increasing radii, made monotone by carrying the running
/// maximum (a supremum over `B(m)` is also a lower bound over `B(m')`, `m' > m`).
pub fn nested_profiles(sys: &VectorFieldSystem, radii: &[f64], grid_density: usize) -> Result<Vec<LipschitzProfile>> {
    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<LipschitzProfile> = Vec::with_capacity(sorted.len());
    for m in sorted {
        let p = profile_lipschitz(sys, m, grid_density)?;
        let p = match out.last() {
            Some(prev) => p.entrywise_max(prev),
            None => p,
        };
        out.push(LipschitzProfile { radius: m, ..p });
    }
    Ok(out)
}

/// Allowed growth of `entry / log m` between the smallest and largest radius.
pub const HYPOTHESIS_SLACK: f64 = 1.5;

/// One line of the growth hypothesis, fitted across radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisLine {
    pub name: String,
    /// Exponent of `log m` in the admissible growth.
    pub log_power: f64,
    pub entries: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Least-squares constant of `entry ~ c (log m)^power`.
    pub fitted: f64,
    /// `ratio(last) / ratio(first)`.
    pub growth: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    pub radii: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub lines: Vec<HypothesisLine>,
    pub profiles: Vec<LipschitzProfile>,
}

impl HypothesisConstants {
    pub fn pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn failed_lines(&self) -> Vec<&str> {
        self.lines.iter().filter(|l| !l.pass).map(|l| l.name.as_str()).collect()
    }
}

fn fit_line(name: &str, log_power: f64, radii: &[f64], entries: Vec<f64>) -> HypothesisLine {
    let g: Vec<f64> = radii.iter().map(|m| m.ln().powf(log_power)).collect();
    let ratios: Vec<f64> = entries.iter().zip(&g).map(|(e, g)| e / g).collect();
    let fitted = entries.iter().zip(&g).map(|(e, g)| e * g).sum::<f64>() / g.iter().map(|g| g * g).sum::<f64>();
    let first = ratios[0];
    let last = *ratios.last().unwrap();
    let growth = if last <= 1e-12 * (1.0 + first.abs()) {
        0.0
    } else if first <= 0.0 {
        f64::INFINITY
    } else {
        last / first
    };
    let finite = ratios.iter().all(|r| r.is_finite());
    HypothesisLine {
        name: name.to_string(),
        log_power,
        entries,
        ratios,
        fitted,
        growth,
        pass: finite && growth < HYPOTHESIS_SLACK,
    }
}

/// Finite-radius check of the six logarithmic growth conditions.
///
/// Every profile entry is divided by `log m` (or `(log m)^{3/2}` for the
/// drift-bracket line) and the line passes when that ratio does not grow by
/// more than [`HYPOTHESIS_SLACK`] from the smallest to the largest radius.
/// The off-diagonal bracket line uses the unsquared norm, consistent with the
/// `(log m)^{3/2}` scaling of the drift-bracket line.
pub fn check_hypothesis_h(sys: &VectorFieldSystem, radii: &[f64], grid_density: usize) -> Result<HypothesisConstants> {
    if radii.len() < 4 {
        return Err(invalid("hypothesis check needs at least 4 radii"));
    }
    if let Some(m) = radii.iter().find(|m| !(**m >= 2.0)) {
        return Err(invalid(format!("hypothesis radii must be >= 2, got {m}")));
    }
    let profiles = nested_profiles(sys, radii, grid_density)?;
    let radii: Vec<f64> = profiles.iter().map(|p| p.radius).collect();
    let col = |f: fn(&LipschitzProfile) -> f64| profiles.iter().map(f).collect::<Vec<_>>();
    let lines = vec![
        fit_line("sup_diffusion_sq", 1.0, &radii, col(|p| p.sup_diffusion_sq)),
        fit_line("sup_drift", 1.0, &radii, col(|p| p.sup_drift)),
        fit_line("lip_diffusion_sq", 1.0, &radii, col(|p| p.lip_diffusion_sq)),
        fit_line("lip_drift", 1.0, &radii, col(|p| p.lip_drift)),
        fit_line("bracket_lip_offdiag", 1.0, &radii, col(|p| p.bracket_lip_offdiag_unsquared())),
        fit_line("bracket_lip_drift", 1.5, &radii, col(|p| p.bracket_lip_drift)),
    ];
    Ok(HypothesisConstants {
        gamma1: lines[0].fitted,
        gamma2: lines[1].fitted,
        beta1: lines[2].fitted,
        beta2: lines[3].fitted,
        delta1: lines[4].fitted,
        delta2: lines[5].fitted,
        radii,
        lines,
        profiles,
    })
}
