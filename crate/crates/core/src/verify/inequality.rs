//! Named moment inequalities: a Monte Carlo left-hand side against a
//! closed-form or structural right-hand side.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bounds::{
    bound_one_point_bounded, bound_one_point_linear_growth, bound_regularized_two_point, bound_two_point_fixed_time,
    bound_two_point_sup, fit_delta0, BoundConstants,
};
use super::convergence::median;
use super::estimate::{collect_samples, MomentEstimate};
use crate::error::{invalid, Error, Result};
use crate::fields::VectorFieldSystem;
use crate::flow::{sup_process, two_point_from, FlowGrid};
use crate::integrate::{solve_regularized, SolverConfig, Trajectory};
use crate::wiener::DyadicPath;
use crate::{distance, norm};

/// Hard checks decide the verdict; shape checks depend on the configured
/// universal constant and are informational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Hard,
    Shape,
}

/// `Le`: pass when `lhs + ci <= rhs`. `Ge`: pass when `lhs - ci >= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InequalityInfo {
    pub name: &'static str,
    pub kind: CheckKind,
    pub summary: &'static str,
}

pub const REGISTRY: [InequalityInfo; 9] = [
    InequalityInfo {
        name: "one-point-sup-bounded",
        kind: CheckKind::Shape,
        summary: "||Y_1(x)||_p <= (1 + C c1 sqrt p) e^c2 (1 + |x|) under bounded diffusion",
    },
    InequalityInfo {
        name: "exp-moment-stability",
        kind: CheckKind::Hard,
        summary: "E exp(delta Y_1^2) is stable in the sample size for delta at the fitted delta_0",
    },
    InequalityInfo {
        name: "one-point-sup-linear-growth",
        kind: CheckKind::Shape,
        summary: "||Y_1(x)||_p <= beta1 e^(beta2 p) (1 + |x|) under linear growth",
    },
    InequalityInfo {
        name: "time-increment-holder",
        kind: CheckKind::Hard,
        summary: "log-log slope of E|x_t - x_s|^2p against |t - s| is at least p - 1/4",
    },
    InequalityInfo {
        name: "two-point-sup-lipschitz",
        kind: CheckKind::Shape,
        summary: "E Y_1(x,y)^p <= 2^p |x-y|^p exp(C l1^2 p^2 + l2^2 p)",
    },
    InequalityInfo {
        name: "two-point-lipschitz",
        kind: CheckKind::Hard,
        summary: "E|x_t(x) - x_t(y)|^2p <= |x-y|^2p exp(2 p^2 l1^2 + 2 p l2)",
    },
    InequalityInfo {
        name: "two-point-local-boundedness",
        kind: CheckKind::Hard,
        summary: "E|z_1(x) - z_1(y)|^p / |x-y|^p stays within a factor 5 over dyadic near pairs",
    },
    InequalityInfo {
        name: "regularized-uniform-moments",
        kind: CheckKind::Hard,
        summary: "E Y_n(1,x)^p varies by at most a factor 1.5 across levels n",
    },
    InequalityInfo {
        name: "regularized-two-point-lipschitz",
        kind: CheckKind::Hard,
        summary: "E|z^n_1(x) - z^n_1(y)|^2p <= |x-y|^2p e^(2 p l2) e^(alpha_n)",
    },
];

pub fn lookup(name: &str) -> Result<&'static InequalityInfo> {
    REGISTRY
        .iter()
        .find(|i| i.name == name)
        .ok_or_else(|| Error::UnknownInequality(name.to_string()))
}

/// Ratio bound for the near-pair and cross-level boundedness checks.
pub const LOCAL_RATIO_LIMIT: f64 = 5.0;
pub const LEVEL_RATIO_LIMIT: f64 = 1.5;
/// Relative change allowed between the last two sample sizes of the exponential moment.
pub const STABILITY_LIMIT: f64 = 0.10;

/// Inputs of a Monte Carlo left-hand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InequalityParams {
    pub p: f64,
    /// Base initial point.
    pub x: Vec<f64>,
    /// Direction from `x` to the partner point; defaults to the first axis.
    pub direction: Option<Vec<f64>>,
    /// `|x - y|` of single-pair checks.
    pub distance: f64,
    /// Near pairs use `|x - y| = 2^{-k}`, `k = 1..=k_max`.
    pub k_max: u32,
    /// Evaluation time of fixed-time two-point checks (an output-grid time).
    pub t: f64,
    /// Regularization level; `None` means the finest level `n_max`.
    pub level: Option<u32>,
    /// Levels compared by the cross-level check.
    pub levels: Vec<u32>,
    pub n_max: u32,
    pub paths: usize,
    pub seed: u64,
    /// Radius of the ball of initial points (exponential-moment fit).
    pub radius: f64,
    /// Orders used to fit `delta_0`.
    pub fit_orders: Vec<f64>,
    pub solver: SolverConfig,
}

impl Default for InequalityParams {
    fn default() -> Self {
        Self {
            p: 2.0,
            x: vec![1.0],
            direction: None,
            distance: 1e-3,
            k_max: 10,
            t: 1.0,
            level: None,
            levels: vec![4, 6, 8, 10],
            n_max: 12,
            paths: 1000,
            seed: 0,
            radius: 1.0,
            fit_orders: vec![2.0, 4.0, 8.0, 16.0],
            solver: SolverConfig::default(),
        }
    }
}

impl InequalityParams {
    fn level(&self) -> Result<u32> {
        let n = self.level.unwrap_or(self.n_max);
        if n > self.n_max {
            return Err(Error::LevelOutOfRange {
                level: n,
                max: self.n_max,
            });
        }
        Ok(n)
    }

    fn direction(&self) -> Vec<f64> {
        self.direction.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; self.x.len()];
            if let Some(first) = e.first_mut() {
                *first = 1.0;
            }
            e
        })
    }

    fn partner(&self, dist: f64) -> Result<Vec<f64>> {
        let e = self.direction();
        let len = norm(&e);
        if e.len() != self.x.len() || !(len > 0.0) {
            return Err(invalid("direction must be a nonzero vector of the state dimension"));
        }
        Ok(self.x.iter().zip(&e).map(|(a, v)| a + dist * v / len).collect())
    }

    fn path(&self, noise: usize, index: u64) -> Result<DyadicPath> {
        DyadicPath::generate(self.n_max, noise, self.seed, index)
    }

    fn check(&self, sys: &VectorFieldSystem) -> Result<()> {
        sys.check_point(&self.x)?;
        if !(self.p >= 1.0) {
            return Err(invalid(format!("moment order must be >= 1, got {}", self.p)));
        }
        if self.paths < 100 {
            return Err(invalid(format!("at least 100 paths are required, got {}", self.paths)));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub kind: CheckKind,
    pub relation: Relation,
    pub lhs: f64,
    /// 99% half-width attached to `lhs` (0 for structural ratios and slopes).
    pub ci: f64,
    pub rhs: f64,
    /// `rhs - (lhs + ci)` for `Le`, `(lhs - ci) - rhs` for `Ge`.
    pub margin: f64,
    pub verdict: bool,
    pub ci_unreliable: bool,
    pub params: InequalityParams,
    pub constants: BoundConstants,
    pub seed: u64,
    pub samples: u64,
    /// Paths on which some trajectory crossed the explosion threshold.
    pub explosions: u64,
    /// Explosions under a hypothesis that guarantees global solutions.
    pub explosion_violation: bool,
    pub estimate: Option<MomentEstimate>,
    pub details: BTreeMap<String, f64>,
}

impl InequalityReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        info: &InequalityInfo,
        relation: Relation,
        lhs: f64,
        ci: f64,
        rhs: f64,
        params: &InequalityParams,
        constants: &BoundConstants,
        explosions: u64,
    ) -> Self {
        let margin = match relation {
            Relation::Le => rhs - (lhs + ci),
            Relation::Ge => (lhs - ci) - rhs,
        };
        Self {
            name: info.name.to_string(),
            kind: info.kind,
            relation,
            lhs,
            ci,
            rhs,
            margin,
            verdict: margin >= 0.0,
            ci_unreliable: false,
            params: params.clone(),
            constants: constants.clone(),
            seed: params.seed,
            samples: params.paths as u64,
            explosions,
            explosion_violation: explosions > 0,
            estimate: None,
            details: BTreeMap::new(),
        }
    }

    fn with_estimate(mut self, e: MomentEstimate) -> Self {
        self.ci_unreliable = e.ci_unreliable();
        self.estimate = Some(e);
        self
    }

    /// Hard checks gate the outcome; shape checks never fail a run.
    pub fn hard_failure(&self) -> bool {
        self.kind == CheckKind::Hard && (!self.verdict || self.explosion_violation)
    }
}

fn sup_norm(tr: &Trajectory) -> f64 {
    if tr.exploded().is_some() {
        return f64::INFINITY;
    }
    sup_process(tr).last().copied().unwrap_or(0.0)
}

/// Sample of `Y_1(x)` for each path.
fn sup_samples(sys: &VectorFieldSystem, prm: &InequalityParams) -> Result<Vec<f64>> {
    let n = prm.level()?;
    collect_samples(prm.paths, prm.seed, |_, i| {
        let path = prm.path(sys.dim_noise(), i)?;
        Ok(sup_norm(&solve_regularized(sys, &path, n, &prm.x, &prm.solver)?))
    })
}

fn explosions(samples: &[f64]) -> u64 {
    samples.iter().filter(|v| !v.is_finite()).count() as u64
}

/// Near-pair study shared by every order: one set of paths, all `k`, all `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRatioStudy {
    pub level: u32,
    pub distances: Vec<f64>,
    pub orders: Vec<f64>,
    /// `estimates[o][k]` estimates `E (|z_1(x) - z_1(y_k)| / |x - y_k|)^{p_o}`.
    pub estimates: Vec<Vec<MomentEstimate>>,
    /// Max over `k` divided by min over `k`, per order.
    pub ratios: Vec<f64>,
    /// Median over paths of `Y_1(x, y_k) / |x - y_k|`, per `k`.
    pub sup_medians: Vec<f64>,
    pub explosions: u64,
}

/// Terminal two-point ratios `|z_1(x) - z_1(y)| / |x - y|` over dyadic near pairs.
pub fn two_point_local_ratios(
    sys: &VectorFieldSystem,
    orders: &[f64],
    prm: &InequalityParams,
) -> Result<LocalRatioStudy> {
    prm.check(sys)?;
    let n = prm.level()?;
    let pairs = FlowGrid::near_pairs(&prm.x, &prm.direction(), prm.k_max)?;
    if pairs.is_empty() || orders.is_empty() {
        return Err(invalid("near-pair study needs k_max >= 1 and at least one order"));
    }
    let distances: Vec<f64> = pairs.iter().map(|(x, y)| distance(x, y)).collect();
    // Per path and pair: (terminal ratio, sup ratio).
    let rows: Vec<Vec<(f64, f64)>> = collect_samples(prm.paths, prm.seed, |_, i| {
        let path = prm.path(sys.dim_noise(), i)?;
        let tx = solve_regularized(sys, &path, n, &prm.x, &prm.solver)?;
        pairs
            .iter()
            .zip(&distances)
            .map(|((x, y), d)| {
                let ty = solve_regularized(sys, &path, n, y, &prm.solver)?;
                let rec = two_point_from(&tx, &ty, x, y);
                Ok(match rec.terminal_distance() {
                    Some(t) => (t / d, rec.sup / d),
                    None => (f64::INFINITY, f64::INFINITY),
                })
            })
            .collect()
    })?;
    let explosions = rows.iter().filter(|r| r.iter().any(|v| !v.0.is_finite())).count() as u64;
    let estimates: Vec<Vec<MomentEstimate>> = orders
        .iter()
        .map(|&p| {
            (0..distances.len())
                .map(|k| {
                    let column: Vec<f64> = rows.iter().map(|r| r[k].0).collect();
                    MomentEstimate::from_samples(p, &column)
                })
                .collect()
        })
        .collect();
    let ratios = estimates
        .iter()
        .map(|row| {
            let vals = row.iter().map(MomentEstimate::estimate);
            let max = vals.clone().fold(f64::MIN, f64::max);
            let min = vals.fold(f64::MAX, f64::min);
            max / min
        })
        .collect();
    let sup_medians = (0..distances.len())
        .map(|k| median(&rows.iter().map(|r| r[k].1).filter(|v| v.is_finite()).collect::<Vec<_>>()))
        .collect();
    Ok(LocalRatioStudy {
        level: n,
        distances,
        orders: orders.to_vec(),
        estimates,
        ratios,
        sup_medians,
        explosions,
    })
}

/// Cross-level study of `E Y_n(1, x)^p` on shared paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMomentStudy {
    pub levels: Vec<u32>,
    /// Common output level on which the suprema are taken.
    pub grid_level: u32,
    pub estimates: Vec<MomentEstimate>,
    pub ratio: f64,
    pub explosions: u64,
}

pub fn uniform_level_moments(sys: &VectorFieldSystem, prm: &InequalityParams) -> Result<LevelMomentStudy> {
    prm.check(sys)?;
    if prm.levels.len() < 2 {
        return Err(invalid("cross-level study needs at least two levels"));
    }
    let top = *prm.levels.iter().max().expect("nonempty");
    if top > prm.n_max {
        return Err(Error::LevelOutOfRange {
            level: top,
            max: prm.n_max,
        });
    }
    let grid_level = top.min(prm.solver.output_level_cap);
    let cfg = SolverConfig {
        fixed_output_level: Some(grid_level),
        ..prm.solver
    };
    let rows: Vec<Vec<f64>> = collect_samples(prm.paths, prm.seed, |_, i| {
        let path = prm.path(sys.dim_noise(), i)?;
        prm.levels
            .iter()
            .map(|&n| Ok(sup_norm(&solve_regularized(sys, &path, n, &prm.x, &cfg)?)))
            .collect()
    })?;
    let explosions = rows.iter().filter(|r| r.iter().any(|v| !v.is_finite())).count() as u64;
    let estimates: Vec<MomentEstimate> = (0..prm.levels.len())
        .map(|j| {
            let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            MomentEstimate::from_samples(prm.p, &column)
        })
        .collect();
    let max = estimates.iter().map(|e| e.estimate()).fold(f64::MIN, f64::max);
    let min = estimates.iter().map(|e| e.estimate()).fold(f64::MAX, f64::min);
    Ok(LevelMomentStudy {
        levels: prm.levels.clone(),
        grid_level,
        estimates,
        ratio: max / min,
        explosions,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Run the named check for system `sys`.
pub fn verify_inequality(
    name: &str,
    sys: &VectorFieldSystem,
    consts: &BoundConstants,
    prm: &InequalityParams,
) -> Result<InequalityReport> {
    let info = lookup(name)?;
    consts.validate()?;
    prm.check(sys)?;
    let p = prm.p;
    let xn = norm(&prm.x);
    let consts = &BoundConstants {
        p,
        noise_dim: sys.dim_noise(),
        ..consts.clone()
    };
    match info.name {
        "one-point-sup-bounded" | "one-point-sup-linear-growth" => {
            let ys = sup_samples(sys, prm)?;
            let e = MomentEstimate::from_samples(p, &ys);
            let (v, ci) = e.norm();
            let rhs = if info.name == "one-point-sup-bounded" {
                bound_one_point_bounded(consts, p, xn)?
            } else {
                bound_one_point_linear_growth(consts, p, xn)?
            };
            Ok(InequalityReport::new(info, Relation::Le, v, ci, rhs, prm, consts, explosions(&ys)).with_estimate(e))
        }
        "exp-moment-stability" => exp_moment_stability(info, sys, consts, prm),
        "time-increment-holder" => time_increment_holder(info, sys, consts, prm),
        "two-point-sup-lipschitz" | "two-point-lipschitz" | "regularized-two-point-lipschitz" => {
            let n = prm.level()?;
            if info.name == "regularized-two-point-lipschitz" && prm.level.is_none() {
                return Err(invalid("regularized-two-point-lipschitz needs an explicit level"));
            }
            let y = prm.partner(prm.distance)?;
            let sup = info.name == "two-point-sup-lipschitz";
            let samples = collect_samples(prm.paths, prm.seed, |_, i| {
                let path = prm.path(sys.dim_noise(), i)?;
                let tx = solve_regularized(sys, &path, n, &prm.x, &prm.solver)?;
                let ty = solve_regularized(sys, &path, n, &y, &prm.solver)?;
                let rec = two_point_from(&tx, &ty, &prm.x, &y);
                if rec.exploded {
                    return Ok(f64::INFINITY);
                }
                if sup {
                    return Ok(rec.sup);
                }
                let k = tx.state_at(prm.t)?.map(|a| (a, ty.state_at(prm.t)));
                match k {
                    Some((a, Ok(Some(b)))) => Ok(distance(a, b)),
                    _ => Ok(f64::INFINITY),
                }
            })?;
            let (order, rhs) = match info.name {
                "two-point-sup-lipschitz" => (p, bound_two_point_sup(consts, p, prm.distance)?),
                "two-point-lipschitz" => (2.0 * p, bound_two_point_fixed_time(consts, p, prm.distance, prm.t)?),
                _ => {
                    let at_level = BoundConstants {
                        n,
                        ..consts.clone()
                    };
                    (2.0 * p, bound_regularized_two_point(&at_level, prm.distance)?)
                }
            };
            let e = MomentEstimate::from_samples(order, &samples);
            let mut r = InequalityReport::new(
                info,
                Relation::Le,
                e.estimate(),
                e.half_width(),
                rhs,
                prm,
                consts,
                explosions(&samples),
            );
            r.details.insert("level".into(), n as f64);
            r.details.insert("distance".into(), prm.distance);
            Ok(r.with_estimate(e))
        }
        "two-point-local-boundedness" => {
            let study = two_point_local_ratios(sys, &[p], prm)?;
            let mut r = InequalityReport::new(
                info,
                Relation::Le,
                study.ratios[0],
                0.0,
                LOCAL_RATIO_LIMIT,
                prm,
                consts,
                study.explosions,
            );
            for (k, e) in study.estimates[0].iter().enumerate() {
                r.details.insert(format!("k{:02}", k + 1), e.estimate());
            }
            Ok(r)
        }
        "regularized-uniform-moments" => {
            let study = uniform_level_moments(sys, prm)?;
            let mut r = InequalityReport::new(
                info,
                Relation::Le,
                study.ratio,
                0.0,
                LEVEL_RATIO_LIMIT,
                prm,
                consts,
                study.explosions,
            );
            for (n, e) in study.levels.iter().zip(&study.estimates) {
                r.details.insert(format!("level{n:02}"), e.estimate());
            }
            r.details.insert("grid_level".into(), study.grid_level as f64);
            Ok(r)
        }
        _ => Err(Error::UnknownInequality(name.to_string())),
    }
}

fn exp_moment_stability(
    info: &InequalityInfo,
    sys: &VectorFieldSystem,
    consts: &BoundConstants,
    prm: &InequalityParams,
) -> Result<InequalityReport> {
    if prm.paths < 1000 {
        return Err(invalid("exponential-moment stability needs at least 1000 paths"));
    }
    let ys = sup_samples(sys, prm)?;
    let xn = norm(&prm.x);
    let norms: Vec<(f64, f64, f64)> = prm
        .fit_orders
        .iter()
        .map(|&q| (q, MomentEstimate::from_samples(q, &ys).norm().0, xn))
        .collect();
    let (beta, fitted) = fit_delta0(&norms, prm.radius)?;
    let delta = consts.delta0.unwrap_or(fitted);
    let sizes = [prm.paths / 100, prm.paths / 10, prm.paths];
    let running = |d: f64| -> [f64; 3] {
        sizes.map(|s| {
            let vals: Vec<f64> = ys[..s].iter().map(|y| (d * y * y).exp()).collect();
            MomentEstimate::from_powers(1.0, &vals).estimate()
        })
    };
    let change = |e: [f64; 3]| (e[2] - e[1]).abs() / e[2];
    let trial = running(delta);
    let large = running(10.0 * delta);
    let mut r = InequalityReport::new(
        info,
        Relation::Le,
        change(trial),
        0.0,
        STABILITY_LIMIT,
        prm,
        consts,
        explosions(&ys),
    );
    r.details.insert("beta".into(), beta);
    r.details.insert("delta0_fitted".into(), fitted);
    r.details.insert("delta".into(), delta);
    for (s, v) in sizes.iter().zip(trial) {
        r.details.insert(format!("exp_moment_{s}"), v);
    }
    for (s, v) in sizes.iter().zip(large) {
        r.details.insert(format!("exp_moment_10x_{s}"), v);
    }
    r.details.insert("relative_change_10x".into(), change(large));
    r.details.insert("diverges_10x".into(), f64::from(u8::from(!(change(large) <= STABILITY_LIMIT))));
    Ok(r)
}

fn time_increment_holder(
    info: &InequalityInfo,
    sys: &VectorFieldSystem,
    consts: &BoundConstants,
    prm: &InequalityParams,
) -> Result<InequalityReport> {
    let n = prm.level()?;
    let grid = prm.solver.output_level(n);
    if grid < 2 {
        return Err(invalid("time-increment slope needs an output grid of level >= 2"));
    }
    let q = 2.0 * prm.p;
    // Per path: average over the grid of |x_{s+h} - x_s|^{2p} for h = 2^{-k}.
    let rows: Vec<Vec<f64>> = collect_samples(prm.paths, prm.seed, |_, i| {
        let path = prm.path(sys.dim_noise(), i)?;
        let tr = solve_regularized(sys, &path, n, &prm.x, &prm.solver)?;
        if tr.terminal().is_none() {
            return Ok(vec![f64::INFINITY; grid as usize]);
        }
        Ok((1..=grid)
            .map(|k| {
                let lag = 1usize << (grid - k);
                let pairs = tr.len() - lag;
                (0..pairs).map(|s| distance(tr.state(s + lag), tr.state(s)).powf(q)).sum::<f64>() / pairs as f64
            })
            .collect())
    })?;
    let ests: Vec<MomentEstimate> = (0..grid as usize)
        .map(|k| MomentEstimate::from_powers(q, &rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect();
    let xs: Vec<f64> = (1..=grid).map(|k| -(k as f64) * std::f64::consts::LN_2).collect();
    let ys: Vec<f64> = ests.iter().map(|e| e.estimate().ln()).collect();
    let slope = ls_slope(&xs, &ys);
    let explosions = rows.iter().filter(|r| !r[0].is_finite()).count() as u64;
    let mut r = InequalityReport::new(info, Relation::Ge, slope, 0.0, prm.p - 0.25, prm, consts, explosions);
    for (k, e) in ests.iter().enumerate() {
        r.details.insert(format!("lag_2^-{:02}", k + 1), e.estimate());
    }
    r.details.insert("level".into(), n as f64);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::families;

    fn small(paths: usize) -> InequalityParams {
        InequalityParams {
            paths,
            n_max: 8,
            seed: 5,
            ..InequalityParams::default()
        }
    }

    #[test]
    fn unknown_name_is_rejected() {
        let sys = families::geometric(1.0, 0.0).unwrap();
        assert!(matches!(
            verify_inequality("nope", &sys, &BoundConstants::default(), &small(100)),
            Err(Error::UnknownInequality(_))
        ));
        assert_eq!(REGISTRY.iter().filter(|i| i.kind == CheckKind::Hard).count(), 6);
    }

    #[test]
    fn margin_follows_relation() {
        let info = lookup("time-increment-holder").unwrap();
        let prm = small(100);
        let k = BoundConstants::default();
        let le = InequalityReport::new(info, Relation::Le, 1.0, 0.5, 2.0, &prm, &k, 0);
        assert_eq!(le.margin, 0.5);
        assert!(le.verdict);
        let ge = InequalityReport::new(info, Relation::Ge, 1.0, 0.5, 2.0, &prm, &k, 0);
        assert_eq!(ge.margin, -1.5);
        assert!(!ge.verdict);
        assert!(ge.hard_failure());
    }

    #[test]
    fn geometric_two_point_lipschitz_passes() {
        let sys = families::geometric(1.0, 0.0).unwrap();
        let consts = BoundConstants {
            l1: 1.0,
            l2: 0.5,
            ..BoundConstants::default()
        };
        let r = verify_inequality("two-point-lipschitz", &sys, &consts, &small(2000)).unwrap();
        assert!(r.verdict && r.margin > 0.0, "{r:?}");
        assert_eq!(r.explosions, 0);
    }

    #[test]
    fn holder_slope_of_bounded_family() {
        let sys = families::trigonometric(1.0, 0.5, 2, 2).unwrap();
        let prm = InequalityParams {
            x: vec![0.3, -0.4],
            p: 2.0,
            ..small(400)
        };
        let r = verify_inequality("time-increment-holder", &sys, &BoundConstants::default(), &prm).unwrap();
        assert!(r.verdict, "slope {}", r.lhs);
    }

    #[test]
    fn exp_moment_is_stable_at_fitted_delta_for_bounded_family() {
        let sys = families::trigonometric(0.5, 0.3, 1, 1).unwrap();
        let prm = InequalityParams {
            x: vec![0.5],
            paths: 2000,
            n_max: 6,
            ..small(2000)
        };
        let r = verify_inequality("exp-moment-stability", &sys, &BoundConstants::default(), &prm).unwrap();
        assert!(r.verdict, "{:?}", r.details);
        assert!(r.details["delta0_fitted"] > 0.0);
    }

    #[test]
    fn uniform_moments_and_local_ratios_on_log_growth() {
        let sys = families::log_growth(&families::LogGrowthParams::default(), 2, 2).unwrap();
        let prm = InequalityParams {
            x: vec![1.0, 0.5],
            levels: vec![2, 4, 6],
            k_max: 4,
            level: Some(6),
            ..small(200)
        };
        let r = verify_inequality("regularized-uniform-moments", &sys, &BoundConstants::default(), &prm).unwrap();
        assert!(r.verdict, "{:?}", r.details);
        let study = two_point_local_ratios(&sys, &[2.0, 4.0], &prm).unwrap();
        assert_eq!(study.estimates.len(), 2);
        assert_eq!(study.estimates[0].len(), 4);
        assert!(study.ratios.iter().all(|r| *r >= 1.0 && *r < LOCAL_RATIO_LIMIT));
        let sups = &study.sup_medians;
        let spread = sups.iter().copied().fold(f64::MIN, f64::max) / sups.iter().copied().fold(f64::MAX, f64::min);
        assert!(spread < LOCAL_RATIO_LIMIT, "{sups:?}");
    }

    #[test]
    fn regularized_two_point_needs_level_and_passes_for_geometric() {
        let sys = families::geometric(1.0, 0.0).unwrap();
        let consts = BoundConstants {
            l1: 1.0,
            l2: 0.0,
            k1: 1.0,
            k2: 0.0,
            ..BoundConstants::default()
        };
        assert!(verify_inequality("regularized-two-point-lipschitz", &sys, &consts, &small(100)).is_err());
        let prm = InequalityParams {
            level: Some(6),
            ..small(500)
        };
        let r = verify_inequality("regularized-two-point-lipschitz", &sys, &consts, &prm).unwrap();
        assert!(r.verdict);
    }
}
