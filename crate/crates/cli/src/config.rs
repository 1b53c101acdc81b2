//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 42
//! paths = 200
//! levels = [4, 6, 8, 10]
//! radius = 4.0
//!
//! [family]
//! name = "log-growth"
//! d = 2
//! noise = 2
//! params = { sigma = 0.5, omega = 1.0, mu = 0.5 }
//!
//! [grid]
//! points = 25
//! ```
//!
//! Unknown keys anywhere are errors. `seed` has no default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stochflow::fields::families::{self, LogGrowthParams};
use stochflow::verify::BoundConstants;
use stochflow::wiener::MAX_LEVEL;
use stochflow::{SolverConfig, VectorFieldSystem};

use crate::CliError;

/// Levels added on top of the finest studied level for the reference solution.
pub const REFERENCE_MARGIN: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub name: String,
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default = "one")]
    pub noise: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Number of initial points in the ball of radius `radius`.
    pub points: usize,
    /// Exponent of the continuity modulus and the Hölder fit.
    pub alpha: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 25, alpha: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesisSpec {
    pub radii: Vec<f64>,
    pub grid_density: usize,
}

impl Default for HypothesisSpec {
    fn default() -> Self {
        Self {
            radii: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            grid_density: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub family: FamilySpec,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    /// Finest level of the sampled paths; defaults to `max(levels) + 4`.
    #[serde(default)]
    pub n_max: Option<u32>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_orders")]
    pub orders: Vec<f64>,
    /// Base initial point; defaults to `(1, 0, ..., 0)`.
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    /// Times at which flow diagnostics are taken.
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// Near pairs `|x - y| = 2^{-k}`, `k = 1..=k_max`.
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    /// `|x - y|` of single-pair inequalities.
    #[serde(default = "default_distance")]
    pub distance: f64,
    /// Inequalities run by `moments`; empty means every registered one.
    #[serde(default)]
    pub inequalities: Vec<String>,
    #[serde(default)]
    pub hypothesis: HypothesisSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub constants: BoundConstants,
    /// Not echoed in reports: results do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

fn default_radius() -> f64 {
    1.0
}
fn default_levels() -> Vec<u32> {
    vec![4, 6, 8, 10]
}
fn default_paths() -> usize {
    100
}
fn default_orders() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn default_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_k_max() -> u32 {
    10
}
fn default_distance() -> f64 {
    1e-3
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
            .unwrap_or_else(|| self.levels.iter().max().copied().unwrap_or(0) + REFERENCE_MARGIN)
    }

    pub fn initial_point(&self) -> Vec<f64> {
        self.x.clone().unwrap_or_else(|| {
            let mut x = vec![0.0; self.family.d];
            x[0] = 1.0;
            x
        })
    }

    /// Cross-field diagnostics; empty when the file is usable.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut err = |key: &str, msg: String| out.push(format!("{key}: {msg}"));
        if let Err(e) = build_system(&self.family) {
            err("family", e.to_string());
        }
        if self.levels.is_empty() {
            err("levels", "at least one level is required".into());
        }
        if self.levels.contains(&0) {
            err("levels", "levels must be >= 1".into());
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            err("levels", "levels must be strictly increasing".into());
        }
        let n_max = self.n_max();
        if n_max > MAX_LEVEL {
            err("n_max", format!("{n_max} exceeds the finest supported level {MAX_LEVEL}"));
        }
        if let Some(&top) = self.levels.iter().max() {
            if top + REFERENCE_MARGIN > n_max {
                err(
                    "levels",
                    format!("reference rule: max level {top} must be <= n_max - {REFERENCE_MARGIN} = {}", n_max as i64 - 4),
                );
            }
        }
        if self.paths == 0 {
            err("paths", "must be >= 1".into());
        }
        if self.orders.is_empty() || self.orders.iter().any(|p| !(*p >= 1.0)) {
            err("orders", "moment orders must be >= 1".into());
        }
        if !(self.radius > 0.0) {
            err("radius", "must be positive".into());
        }
        if self.grid.points < 2 {
            err("grid.points", "at least two points are required".into());
        }
        if !(self.grid.alpha > 0.0 && self.grid.alpha < 1.0) {
            err("grid.alpha", "must lie in (0, 1)".into());
        }
        if let Some(x) = &self.x {
            if x.len() != self.family.d {
                err("x", format!("expected {} components, got {}", self.family.d, x.len()));
            }
        }
        if self.times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            err("times", "times must lie in [0, 1]".into());
        }
        if self.k_max == 0 || self.k_max > 52 {
            err("k_max", "must lie in 1..=52".into());
        }
        if !(self.distance > 0.0) {
            err("distance", "must be positive".into());
        }
        for name in &self.inequalities {
            if stochflow::verify::inequality::lookup(name).is_err() {
                err("inequalities", format!("unknown inequality `{name}`"));
            }
        }
        if self.hypothesis.radii.len() < 4 || self.hypothesis.radii.iter().any(|m| !(*m >= 2.0)) {
            err("hypothesis.radii", "at least 4 radii, each >= 2".into());
        }
        if self.hypothesis.grid_density < 8 {
            err("hypothesis.grid_density", "must be >= 8".into());
        }
        if let Err(e) = self.solver.validate() {
            err("solver", e.to_string());
        }
        if let Err(e) = self.constants.validate() {
            err("constants", e.to_string());
        }
        if self.workers == Some(0) {
            err("workers", "must be >= 1".into());
        }
        out
    }
}

fn take(params: &BTreeMap<String, f64>, allowed: &[(&str, f64)]) -> Result<Vec<f64>, String> {
    if let Some(k) = params.keys().find(|k| !allowed.iter().any(|(a, _)| a == k)) {
        let names: Vec<&str> = allowed.iter().map(|(a, _)| *a).collect();
        return Err(format!("unknown parameter `{k}` (allowed: {})", names.join(", ")));
    }
    Ok(allowed.iter().map(|(k, v)| params.get(*k).copied().unwrap_or(*v)).collect())
}

fn fixed_dims(spec: &FamilySpec, d: usize, n: usize) -> Result<(), String> {
    if spec.d != d || spec.noise != n {
        return Err(format!("family `{}` needs d = {d}, noise = {n}", spec.name));
    }
    Ok(())
}

pub const FAMILIES: [&str; 7] = ["constant", "linear", "geometric", "rotation", "trigonometric", "log-growth", "explosive"];

/// Build the named coefficient family.
pub fn build_system(spec: &FamilySpec) -> Result<VectorFieldSystem, CliError> {
    let bad = |m: String| CliError::Config(vec![format!("family: {m}")]);
    let (d, n) = (spec.d, spec.noise);
    if d == 0 || n == 0 {
        return Err(bad("d and noise must be >= 1".into()));
    }
    let built = match spec.name.as_str() {
        "constant" => {
            let v = take(&spec.params, &[("drift", 0.0), ("diffusion", 1.0)]).map_err(bad)?;
            let diffusions = (0..n)
                .map(|i| {
                    let mut a = vec![0.0; d];
                    a[i % d] = v[1];
                    a
                })
                .collect();
            families::constant(vec![v[0]; d], diffusions)
        }
        "linear" => {
            let v = take(&spec.params, &[("drift", 0.0), ("diffusion", 1.0)]).map_err(bad)?;
            let eye = |s: f64| (0..d * d).map(|k| if k % (d + 1) == 0 { s } else { 0.0 }).collect::<Vec<_>>();
            families::linear(d, eye(v[0]), (0..n).map(|_| eye(v[1])).collect())
        }
        "geometric" => {
            fixed_dims(spec, 1, 1).map_err(bad)?;
            let v = take(&spec.params, &[("sigma", 1.0), ("mu", 0.0)]).map_err(bad)?;
            families::geometric(v[0], v[1])
        }
        "rotation" => {
            fixed_dims(spec, 2, 1).map_err(bad)?;
            let v = take(&spec.params, &[("sigma", 1.0), ("mu", 0.0)]).map_err(bad)?;
            families::rotation(v[0], v[1])
        }
        "trigonometric" => {
            let v = take(&spec.params, &[("amplitude", 1.0), ("drift_amplitude", 0.5)]).map_err(bad)?;
            families::trigonometric(v[0], v[1], d, n)
        }
        "log-growth" => {
            let dflt = LogGrowthParams::default();
            let v = take(&spec.params, &[("sigma", dflt.sigma), ("omega", dflt.omega), ("mu", dflt.mu)]).map_err(bad)?;
            families::log_growth(
                &LogGrowthParams {
                    sigma: v[0],
                    omega: v[1],
                    mu: v[2],
                },
                d,
                n,
            )
        }
        "explosive" => {
            if n != 1 {
                return Err(bad("family `explosive` needs noise = 1".into()));
            }
            let v = take(&spec.params, &[("sigma", 0.0)]).map_err(bad)?;
            families::explosive(d, v[0])
        }
        other => return Err(bad(format!("unknown family `{other}` (known: {})", FAMILIES.join(", ")))),
    };
    built.map_err(|e| bad(e.to_string()))
}
