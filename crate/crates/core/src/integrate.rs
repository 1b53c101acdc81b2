//! Pathwise solvers driven by a sampled [`DyadicPath`].
//!
//! All solvers record the state on the dyadic output grid of level
//! `min(n, cfg.output_level_cap)` and stop as soon as `|z|` crosses the
//! explosion threshold.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{CorrectionScratch, LinearCoefficients, VectorFieldSystem};
use crate::norm;
use crate::wiener::DyadicPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Classical RK4 steps per level-`n` dyadic interval.
    pub substeps_per_interval: usize,
    pub explosion_threshold: f64,
    /// Trajectories are sampled on level `min(n, output_level_cap)`.
    pub output_level_cap: u32,
    /// Sample every regularized trajectory on exactly this level instead,
    /// even when it is finer than `n`. Finest-grid schemes ignore levels above `n`.
    pub fixed_output_level: Option<u32>,
    /// Relative disagreement above which the two reference schemes are flagged.
    pub reference_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            substeps_per_interval: 8,
            explosion_threshold: 1e8,
            output_level_cap: 10,
            fixed_output_level: None,
            reference_tolerance: 0.05,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.substeps_per_interval == 0 {
            return Err(invalid("substeps_per_interval must be >= 1"));
        }
        if !(self.explosion_threshold > 0.0) {
            return Err(invalid("explosion_threshold must be positive"));
        }
        if self.fixed_output_level.is_some_and(|l| l > crate::wiener::MAX_LEVEL) {
            return Err(invalid("fixed_output_level beyond the finest admissible level"));
        }
        if !(self.reference_tolerance > 0.0) {
            return Err(invalid("reference_tolerance must be positive"));
        }
        Ok(())
    }

    pub fn output_level(&self, n: u32) -> u32 {
        self.fixed_output_level.unwrap_or_else(|| n.min(self.output_level_cap))
    }
}

/// States on a dyadic output grid, truncated at the explosion time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dim: usize,
    level: u32,
    times: Vec<f64>,
    /// Row-major `times.len() x dim`.
    states: Vec<f64>,
    exploded: Option<f64>,
    threshold: f64,
}

impl Trajectory {
    /// Build a trajectory from states on the level-`level` grid starting at `t = 0`.
    pub fn from_states(level: u32, states: Vec<Vec<f64>>, threshold: f64) -> Result<Self> {
        let dim = states.first().map(Vec::len).ok_or_else(|| invalid("empty trajectory"))?;
        if states.len() > (1usize << level) + 1 {
            return Err(invalid("more states than grid nodes"));
        }
        if states.iter().any(|s| s.len() != dim) {
            return Err(invalid("states of mixed dimension"));
        }
        let dt = (-(level as f64)).exp2();
        Ok(Self {
            dim,
            level,
            times: (0..states.len()).map(|k| k as f64 * dt).collect(),
            states: states.concat(),
            exploded: None,
            threshold,
        })
    }

    fn start(dim: usize, level: u32, x0: &[f64], threshold: f64) -> Self {
        let cap = (1usize << level) + 1;
        let mut states = Vec::with_capacity(cap * dim);
        states.extend_from_slice(x0);
        Self {
            dim,
            level,
            times: {
                let mut t = Vec::with_capacity(cap);
                t.push(0.0);
                t
            },
            states,
            exploded: None,
            threshold,
        }
    }

    fn push(&mut self, t: f64, z: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(z);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dyadic level of the output grid.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn initial(&self) -> &[f64] {
        self.state(0)
    }

    /// Threshold crossing time resolved to integrator substeps.
    pub fn exploded(&self) -> Option<f64> {
        self.exploded
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// State at `t = 1`, absent after an explosion.
    pub fn terminal(&self) -> Option<&[f64]> {
        if self.exploded.is_some() || self.len() != (1usize << self.level) + 1 {
            return None;
        }
        Some(self.state(self.len() - 1))
    }

    /// State at an output-grid time; `None` when the solution had already exploded.
    pub fn state_at(&self, t: f64) -> Result<Option<&[f64]>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("time {t} outside [0, 1]")));
        }
        let scaled = t * (self.level as f64).exp2();
        let k = scaled.round();
        if (scaled - k).abs() > 1e-9 {
            return Err(invalid(format!("time {t} is not on the level-{} output grid", self.level)));
        }
        let k = k as usize;
        Ok((k < self.len()).then(|| self.state(k)))
    }

    /// CSV with header `t,x1..xd,exploded`; an exploded run ends with a row at
    /// the crossing time holding `NaN` states.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{},exploded", header.join(","))?;
        for (t, s) in self.times.iter().zip(self.states()) {
            let row: Vec<String> = s.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{t:e},{},0", row.join(","))?;
        }
        if let Some(tau) = self.exploded {
            let row = vec!["NaN"; self.dim].join(",");
            writeln!(w, "{tau:e},{row},1")?;
        }
        Ok(())
    }
}

/// First output-grid time at or after the threshold crossing, if any.
pub fn detect_explosion(traj: &Trajectory) -> Option<f64> {
    let dt = (-(traj.level as f64)).exp2();
    if let Some(tau) = traj.exploded {
        return Some(((tau / dt).ceil() * dt).min(1.0));
    }
    traj.times
        .iter()
        .zip(traj.states())
        .find(|(_, s)| !(norm(s) <= traj.threshold))
        .map(|(t, _)| *t)
}

#[derive(Clone, Copy)]
enum Scheme {
    Rk4,
    Heun,
    EulerMaruyama { corrected: bool },
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
    tmp: Vec<f64>,
    slopes: Vec<f64>,
    correction: CorrectionScratch,
}

impl Scratch {
    fn new(d: usize, noise: usize) -> Self {
        Self {
            k1: vec![0.0; d],
            k2: vec![0.0; d],
            k3: vec![0.0; d],
            k4: vec![0.0; d],
            stage: vec![0.0; d],
            tmp: vec![0.0; d],
            slopes: vec![0.0; noise],
            correction: CorrectionScratch::new(d),
        }
    }
}

/// Overflow-flavoured domain errors count as explosions; everything else propagates.
fn is_overflow(e: &Error) -> bool {
    matches!(e, Error::Domain { overflow: true, .. })
}

fn rk4_step(sys: &VectorFieldSystem, z: &mut [f64], dt: f64, s: &mut Scratch) -> Result<()> {
    let Scratch {
        k1,
        k2,
        k3,
        k4,
        stage,
        tmp,
        slopes,
        ..
    } = s;
    sys.driven_rhs(z, slopes, k1, tmp)?;
    for j in 0..z.len() {
        stage[j] = z[j] + 0.5 * dt * k1[j];
    }
    sys.driven_rhs(stage, slopes, k2, tmp)?;
    for j in 0..z.len() {
        stage[j] = z[j] + 0.5 * dt * k2[j];
    }
    sys.driven_rhs(stage, slopes, k3, tmp)?;
    for j in 0..z.len() {
        stage[j] = z[j] + dt * k3[j];
    }
    sys.driven_rhs(stage, slopes, k4, tmp)?;
    for j in 0..z.len() {
        z[j] += dt / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]);
    }
    Ok(())
}

/// Explicit trapezoid on the driven ODE over one finest interval: the
/// Stratonovich-consistent Heun scheme.
fn heun_step(sys: &VectorFieldSystem, z: &mut [f64], dt: f64, s: &mut Scratch) -> Result<()> {
    sys.driven_rhs(z, &s.slopes, &mut s.k1, &mut s.tmp)?;
    for j in 0..z.len() {
        s.stage[j] = z[j] + dt * s.k1[j];
    }
    sys.driven_rhs(&s.stage, &s.slopes, &mut s.k2, &mut s.tmp)?;
    for j in 0..z.len() {
        z[j] += 0.5 * dt * (s.k1[j] + s.k2[j]);
    }
    Ok(())
}

fn euler_step(
    sys: &VectorFieldSystem,
    z: &mut [f64],
    dt: f64,
    dw: &[f64],
    corrected: bool,
    s: &mut Scratch,
) -> Result<()> {
    if corrected {
        sys.stratonovich_correction_into(z, &mut s.k1, &mut s.correction)?;
    } else {
        sys.drift().eval_into(z, &mut s.k1)?;
    }
    for j in 0..z.len() {
        s.k1[j] *= dt;
    }
    for (field, &inc) in sys.diffusions().iter().zip(dw) {
        field.eval_into(z, &mut s.tmp)?;
        for j in 0..z.len() {
            s.k1[j] += inc * s.tmp[j];
        }
    }
    for j in 0..z.len() {
        z[j] += s.k1[j];
    }
    Ok(())
}

/// One-step maps of linear systems `A_k(x) = M_k x` as matrices: for the
/// frozen-slope ODE `z' = A z` a step of each scheme is exactly a polynomial
/// in `dt A`, so it is assembled once per interval.
struct LinearStepper<'a> {
    coeffs: &'a LinearCoefficients,
    scheme: Scheme,
    d: usize,
    /// Drift matrix used by Euler-Maruyama (corrected or raw).
    ito_drift: Vec<f64>,
    step: Vec<f64>,
    x: Vec<f64>,
    acc: Vec<f64>,
    prod: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> LinearStepper<'a> {
    fn new(coeffs: &'a LinearCoefficients, scheme: Scheme) -> Self {
        let d = (coeffs.drift.len() as f64).sqrt().round() as usize;
        let mut ito_drift = coeffs.drift.clone();
        if let Scheme::EulerMaruyama { corrected: true } = scheme {
            for m in &coeffs.diffusions {
                let mut sq = vec![0.0; d * d];
                matmul_into(d, m, m, &mut sq);
                for (a, b) in ito_drift.iter_mut().zip(&sq) {
                    *a += 0.5 * b;
                }
            }
        }
        Self {
            coeffs,
            scheme,
            d,
            ito_drift,
            step: vec![0.0; d * d],
            x: vec![0.0; d * d],
            acc: vec![0.0; d * d],
            prod: vec![0.0; d * d],
            tmp: vec![0.0; d],
        }
    }

    fn add_identity(d: usize, m: &mut [f64]) {
        for r in 0..d {
            m[r * d + r] += 1.0;
        }
    }

    fn prepare(&mut self, slopes: &[f64], dw: &[f64], dt: f64) {
        let d = self.d;
        match self.scheme {
            Scheme::EulerMaruyama { .. } => {
                for (s, a) in self.step.iter_mut().zip(&self.ito_drift) {
                    *s = dt * a;
                }
                for (m, w) in self.coeffs.diffusions.iter().zip(dw) {
                    for (s, v) in self.step.iter_mut().zip(m) {
                        *s += w * v;
                    }
                }
                Self::add_identity(d, &mut self.step);
            }
            Scheme::Rk4 | Scheme::Heun => {
                // x = dt (M_0 + sum_i c_i M_i)
                for (x, a) in self.x.iter_mut().zip(&self.coeffs.drift) {
                    *x = dt * a;
                }
                for (m, c) in self.coeffs.diffusions.iter().zip(slopes) {
                    for (x, v) in self.x.iter_mut().zip(m) {
                        *x += dt * c * v;
                    }
                }
                // Horner form of I + x + x^2/2 (+ x^3/6 + x^4/24 for RK4).
                let order = if let Scheme::Rk4 = self.scheme { 4 } else { 2 };
                self.acc.fill(0.0);
                Self::add_identity(d, &mut self.acc);
                for k in (1..=order).rev() {
                    matmul_into(d, &self.x, &self.acc, &mut self.prod);
                    for (a, p) in self.acc.iter_mut().zip(&self.prod) {
                        *a = p / k as f64;
                    }
                    Self::add_identity(d, &mut self.acc);
                }
                self.step.copy_from_slice(&self.acc);
            }
        }
    }

    fn apply(&mut self, z: &mut [f64]) {
        let d = self.d;
        for r in 0..d {
            self.tmp[r] = (0..d).map(|c| self.step[r * d + c] * z[c]).sum();
        }
        z.copy_from_slice(&self.tmp);
    }
}

fn matmul_into(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = (0..d).map(|k| a[r * d + k] * b[k * d + c]).sum();
        }
    }
}

fn solve(
    sys: &VectorFieldSystem,
    path: &DyadicPath,
    n: u32,
    x0: &[f64],
    cfg: &SolverConfig,
    scheme: Scheme,
) -> Result<Trajectory> {
    cfg.validate()?;
    sys.check_point(x0)?;
    if path.noise_dim() != sys.dim_noise() {
        return Err(Error::Dimension {
            expected: sys.dim_noise(),
            got: path.noise_dim(),
        });
    }
    if n > path.n_max() {
        return Err(Error::LevelOutOfRange {
            level: n,
            max: path.n_max(),
        });
    }
    let d = sys.dim_state();
    let out_level = match scheme {
        Scheme::Rk4 => cfg.output_level(n),
        _ => cfg.output_level(n).min(n),
    };
    // Output nodes every `stride` level-n intervals, or `split` output cells per interval.
    let stride = 1usize << n.saturating_sub(out_level);
    let split = 1usize << out_level.saturating_sub(n);
    let h = (-(n as f64)).exp2();
    let substeps = match scheme {
        Scheme::Rk4 => cfg.substeps_per_interval,
        _ => 1,
    };
    let dt = h / (substeps * split) as f64;

    let mut traj = Trajectory::start(d, out_level, x0, cfg.explosion_threshold);
    let mut z = x0.to_vec();
    let mut s = Scratch::new(d, sys.dim_noise());
    let mut dw = vec![0.0; sys.dim_noise()];

    let threshold_sq = cfg.explosion_threshold * cfg.explosion_threshold;
    let mut linear = sys.linear_coefficients().map(|m| LinearStepper::new(m, scheme));

    for l in 0..(1usize << n) {
        path.increment_into(n, l, &mut dw);
        for (c, inc) in s.slopes.iter_mut().zip(&dw) {
            *c = inc / h;
        }
        if let Some(lin) = linear.as_mut() {
            lin.prepare(&s.slopes, &dw, dt);
        }
        for piece in 0..split {
            for sub in 0..substeps {
                let step = match (linear.as_mut(), scheme) {
                    (Some(lin), _) => {
                        lin.apply(&mut z);
                        Ok(())
                    }
                    (None, Scheme::Rk4) => rk4_step(sys, &mut z, dt, &mut s),
                    (None, Scheme::Heun) => heun_step(sys, &mut z, dt, &mut s),
                    (None, Scheme::EulerMaruyama { corrected }) => euler_step(sys, &mut z, dt, &dw, corrected, &mut s),
                };
                let t = l as f64 * h + ((piece * substeps + sub + 1) as f64) * dt;
                match step {
                    Ok(()) => {}
                    Err(e) if is_overflow(&e) => {
                        traj.exploded = Some(t);
                        return Ok(traj);
                    }
                    Err(e) => return Err(e),
                }
                if !(z.iter().map(|v| v * v).sum::<f64>() <= threshold_sq) {
                    traj.exploded = Some(t);
                    return Ok(traj);
                }
            }
            if split > 1 {
                traj.push(l as f64 * h + ((piece + 1) * substeps) as f64 * dt, &z);
            }
        }
        if split == 1 && (l + 1) % stride == 0 {
            traj.push((l + 1) as f64 * h, &z);
        }
    }
    Ok(traj)
}

/// Regularized ODE `dz = A_0(z) dt + sum_i A_i(z) c_i dt` with the constant
/// level-`n` slopes `c` of the path on each dyadic interval.
pub fn solve_regularized(
    sys: &VectorFieldSystem,
    path: &DyadicPath,
    n: u32,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    solve(sys, path, n, x0, cfg, Scheme::Rk4)
}

/// Stratonovich Heun (predictor-corrector) on the finest grid of the path.
pub fn solve_predictor_corrector(
    sys: &VectorFieldSystem,
    path: &DyadicPath,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    solve(sys, path, path.n_max(), x0, cfg, Scheme::Heun)
}

/// Euler-Maruyama for the Itô form with corrected drift on the finest grid.
pub fn solve_ito_corrected(
    sys: &VectorFieldSystem,
    path: &DyadicPath,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    solve(sys, path, path.n_max(), x0, cfg, Scheme::EulerMaruyama { corrected: true })
}

/// Euler-Maruyama with the raw drift `A_0`: the Itô equation without correction.
pub fn solve_ito_uncorrected(
    sys: &VectorFieldSystem,
    path: &DyadicPath,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    solve(sys, path, path.n_max(), x0, cfg, Scheme::EulerMaruyama { corrected: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    /// Regularized solution at the finest level of the path.
    pub trajectory: Trajectory,
    /// Heun solution on the same finest grid.
    pub cross_check: Trajectory,
    /// Max over common output times of `|a - b| / (1 + |a|)`.
    pub disagreement: f64,
    /// Disagreement above `cfg.reference_tolerance`, or only one scheme exploded.
    pub flagged: bool,
}

/// Reference solution: the regularized ODE at `path.n_max()`, cross-checked
/// against a predictor-corrector scheme on the same increments.
pub fn solve_reference(
    sys: &VectorFieldSystem,
    path: &DyadicPath,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<ReferenceSolution> {
    let trajectory = solve_regularized(sys, path, path.n_max(), x0, cfg)?;
    let cross_check = solve_predictor_corrector(sys, path, x0, cfg)?;
    let disagreement = trajectory
        .states()
        .zip(cross_check.states())
        .map(|(a, b)| crate::distance(a, b) / (1.0 + norm(a)))
        .fold(0.0, f64::max);
    let flagged = disagreement > cfg.reference_tolerance
        || trajectory.exploded.is_some() != cross_check.exploded.is_some();
    Ok(ReferenceSolution {
        trajectory,
        cross_check,
        disagreement,
        flagged,
    })
}
