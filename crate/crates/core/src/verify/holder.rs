//! Empirical space-time Hölder constants of a simulated flow.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::FlowResult;
use crate::distance;

/// Minimum number of spatial and of temporal pairs.
pub const MIN_PAIRS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub level: u32,
    pub alpha: f64,
    /// `max |Δz| / (|Δx|^alpha + |Δt|^alpha)` over all pairs.
    pub constant: f64,
    pub spatial_constant: f64,
    pub time_constant: f64,
    pub spatial_pairs: usize,
    pub time_pairs: usize,
    /// Trajectories left out because they exploded.
    pub skipped: usize,
}

/// Hölder constant of `(t, x) -> z_t(x)` on one flow snapshot.
///
/// Spatial pairs join each initial point to its nearest neighbour and are
/// compared at every output time; time pairs are consecutive output times of
/// every trajectory.
pub fn fit_holder_field(flow: &FlowResult, alpha: f64, include_time_pairs: bool) -> Result<HolderEstimate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let alive: Vec<usize> = (0..flow.trajectories.len())
        .filter(|&i| flow.trajectories[i].exploded().is_none())
        .collect();
    let skipped = flow.trajectories.len() - alive.len();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for &i in &alive {
        let xi = &flow.initial_points[i];
        let nearest = alive
            .iter()
            .filter(|&&j| j != i)
            .min_by(|&&a, &&b| distance(xi, &flow.initial_points[a]).total_cmp(&distance(xi, &flow.initial_points[b])));
        if let Some(&j) = nearest {
            let pair = (i.min(j), i.max(j));
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        }
    }
    if pairs.len() < MIN_PAIRS {
        return Err(invalid(format!("need at least {MIN_PAIRS} spatial pairs, got {}", pairs.len())));
    }
    let mut spatial = 0.0f64;
    for &(i, j) in &pairs {
        let scale = distance(&flow.initial_points[i], &flow.initial_points[j]).powf(alpha);
        let (a, b) = (&flow.trajectories[i], &flow.trajectories[j]);
        for (u, v) in a.states().zip(b.states()) {
            spatial = spatial.max(distance(u, v) / scale);
        }
    }

    let mut time = 0.0f64;
    let mut time_pairs = 0;
    if include_time_pairs {
        for &i in &alive {
            let tr = &flow.trajectories[i];
            let ts = tr.times();
            for k in 1..tr.len() {
                time = time.max(distance(tr.state(k), tr.state(k - 1)) / (ts[k] - ts[k - 1]).powf(alpha));
                time_pairs += 1;
            }
        }
        if time_pairs < MIN_PAIRS {
            return Err(invalid(format!("need at least {MIN_PAIRS} time pairs, got {time_pairs}")));
        }
    }
    Ok(HolderEstimate {
        level: flow.level,
        alpha,
        constant: spatial.max(time),
        spatial_constant: spatial,
        time_constant: time,
        spatial_pairs: pairs.len(),
        time_pairs,
        skipped,
    })
}

/// Max over min of the constants of a family of estimates (e.g. across levels).
pub fn holder_spread(estimates: &[HolderEstimate]) -> f64 {
    let c = estimates.iter().map(|e| e.constant);
    c.clone().fold(f64::MIN, f64::max) / c.fold(f64::MAX, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::families;
    use crate::flow::{simulate_flow, FlowGrid, Resolution};
    use crate::integrate::SolverConfig;
    use crate::wiener::DyadicPath;

    #[test]
    fn constant_flow_has_zero_constant() {
        let sys = families::constant(vec![0.0], vec![vec![0.0]]).unwrap();
        let grid = FlowGrid::ball_lattice(1, 1.0, 60).unwrap();
        let path = DyadicPath::generate(6, 1, 0, 0).unwrap();
        let flow = simulate_flow(&sys, &path, Resolution::Level(6), &grid, &SolverConfig::default()).unwrap();
        let h = fit_holder_field(&flow, 0.5, true).unwrap();
        assert_eq!(h.time_constant, 0.0);
        // Identity map: spatial ratio is |Δx|^{1 - alpha} <= (2/59)^{1/2}.
        assert!(h.spatial_constant <= (2.0f64 / 59.0).sqrt() + 1e-12);
        let id = fit_holder_field(&flow, 1.0, false).unwrap();
        assert!((id.constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_linear_flow_has_constant_exp_of_max_path() {
        let sys = families::geometric(1.0, 0.0).unwrap();
        let grid = FlowGrid::ball_lattice(1, 2.0, 40).unwrap();
        let path = DyadicPath::generate(10, 1, 9, 0).unwrap();
        let flow = simulate_flow(&sys, &path, Resolution::Level(10), &grid, &SolverConfig::default()).unwrap();
        let h = fit_holder_field(&flow, 1.0, false).unwrap();
        let wmax = (0..=1024).map(|k| path.node(10, k).unwrap()[0]).fold(f64::MIN, f64::max);
        assert!((h.constant / wmax.exp() - 1.0).abs() < 1e-6, "{} vs {}", h.constant, wmax.exp());
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let sys = families::geometric(1.0, 0.0).unwrap();
        let grid = FlowGrid::ball_lattice(1, 1.0, 5).unwrap();
        let path = DyadicPath::generate(4, 1, 0, 0).unwrap();
        let flow = simulate_flow(&sys, &path, Resolution::Level(4), &grid, &SolverConfig::default()).unwrap();
        assert!(fit_holder_field(&flow, 0.5, false).is_err());
        assert!(fit_holder_field(&flow, 1.5, false).is_err());
    }

    #[test]
    fn spread_of_equal_constants_is_one() {
        let e = HolderEstimate {
            level: 4,
            alpha: 0.5,
            constant: 2.0,
            spatial_constant: 2.0,
            time_constant: 0.0,
            spatial_pairs: 20,
            time_pairs: 0,
            skipped: 0,
        };
        assert_eq!(holder_spread(&[e.clone(), e]), 1.0);
    }
}
