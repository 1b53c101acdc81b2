//! Flows of many initial points on one shared noise path.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::VectorFieldSystem;
use crate::integrate::{solve_regularized, SolverConfig, Trajectory};
use crate::wiener::DyadicPath;
use crate::{distance, norm};

/// Which regularized solution to use: a fixed level or the finest level of the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Level(u32),
    Reference,
}

impl Resolution {
    pub fn level(&self, path: &DyadicPath) -> u32 {
        match *self {
            Resolution::Level(n) => n,
            Resolution::Reference => path.n_max(),
        }
    }
}

/// Initial points inside the closed ball `B(R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowGrid {
    dim: usize,
    radius: f64,
    points: Vec<Vec<f64>>,
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Radical inverse of `k` in base `b` (Halton coordinate).
fn radical_inverse(mut k: u64, b: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / b as f64);
    while k > 0 {
        inv += (k % b) as f64 * f;
        k /= b;
        f /= b as f64;
    }
    inv
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

impl FlowGrid {
    pub fn new(points: Vec<Vec<f64>>, radius: f64) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or_else(|| invalid("flow grid is empty"))?;
        if dim == 0 {
            return Err(invalid("points must have positive dimension"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid(format!("radius must be positive, got {radius}")));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: p.len(),
                });
            }
            if !(norm(p) <= radius * (1.0 + 1e-12)) {
                return Err(invalid(format!("point {i} lies outside B({radius})")));
            }
            if points[..i].iter().any(|q| q == p) {
                return Err(invalid(format!("point {i} is a duplicate")));
            }
        }
        Ok(Self { dim, radius, points })
    }

    /// `count` deterministic, roughly uniform points of `B(R)`: evenly spaced
    /// in 1-D, a Vogel spiral in 2-D and ball-filtered Halton points above.
    pub fn ball_lattice(dim: usize, radius: f64, count: usize) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(invalid("ball lattice needs positive dimension and count"));
        }
        if dim > PRIMES.len() {
            return Err(invalid(format!("ball lattice supports d <= {}", PRIMES.len())));
        }
        let points: Vec<Vec<f64>> = match dim {
            1 if count == 1 => vec![vec![0.0]],
            1 => (0..count)
                .map(|k| vec![radius * (2.0 * k as f64 / (count - 1) as f64 - 1.0)])
                .collect(),
            2 => (0..count)
                .map(|k| {
                    let r = radius * ((k as f64 + 0.5) / count as f64).sqrt();
                    let th = k as f64 * GOLDEN_ANGLE;
                    vec![r * th.cos(), r * th.sin()]
                })
                .collect(),
            _ => (1u64..)
                .map(|k| {
                    PRIMES[..dim]
                        .iter()
                        .map(|b| radius * (2.0 * radical_inverse(k, *b) - 1.0))
                        .collect::<Vec<f64>>()
                })
                .filter(|p| norm(p) <= radius)
                .take(count)
                .collect(),
        };
        Self::new(points, radius)
    }

    /// Dyadic shrinking pairs `(x, x + 2^{-k} e)` for `k = 1..=k_max`, `e` normalised.
    pub fn near_pairs(x: &[f64], direction: &[f64], k_max: u32) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        if x.len() != direction.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: direction.len(),
            });
        }
        let len = norm(direction);
        if !(len > 0.0) {
            return Err(invalid("near-pair direction must be nonzero"));
        }
        Ok((1..=k_max)
            .map(|k| {
                let h = (-(k as f64)).exp2() / len;
                let y = x.iter().zip(direction).map(|(a, e)| a + h * e).collect();
                (x.to_vec(), y)
            })
            .collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Trajectories of every grid point, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub level: u32,
    pub initial_points: Vec<Vec<f64>>,
    pub trajectories: Vec<Trajectory>,
}

impl FlowResult {
    pub fn explosions(&self) -> usize {
        self.trajectories.iter().filter(|t| t.exploded().is_some()).count()
    }

    /// CSV with header `x1..xd,y1..yd,exploded` mapping each initial point to its state at `t`.
    pub fn write_snapshot_csv<W: Write>(&self, t: f64, mut w: W) -> Result<()> {
        let d = self.initial_points.first().map_or(0, Vec::len);
        let xs: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        let ys: Vec<String> = (1..=d).map(|i| format!("y{i}")).collect();
        let io = |e: io::Error| invalid(format!("snapshot write failed: {e}"));
        writeln!(w, "{},{},exploded", xs.join(","), ys.join(",")).map_err(io)?;
        for (x, tr) in self.initial_points.iter().zip(&self.trajectories) {
            let at = tr.state_at(t)?;
            let xcol: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
            let ycol: Vec<String> = match at {
                Some(s) => s.iter().map(|v| format!("{v:e}")).collect(),
                None => vec!["NaN".to_string(); d],
            };
            writeln!(w, "{},{},{}", xcol.join(","), ycol.join(","), u8::from(at.is_none())).map_err(io)?;
        }
        Ok(())
    }
}

/// Integrate every grid point on the same path at the same resolution.
pub fn simulate_flow(
    sys: &VectorFieldSystem,
    path: &DyadicPath,
    resolution: Resolution,
    grid: &FlowGrid,
    cfg: &SolverConfig,
) -> Result<FlowResult> {
    let n = resolution.level(path);
    let trajectories = grid
        .points
        .par_iter()
        .map(|x| solve_regularized(sys, path, n, x, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(FlowResult {
        level: cfg.output_level(n),
        initial_points: grid.points.clone(),
        trajectories,
    })
}

/// Running maximum of `|x_s|` over the recorded output grid.
pub fn sup_process(traj: &Trajectory) -> Vec<f64> {
    traj.states()
        .scan(0.0f64, |m, s| {
            *m = m.max(norm(s));
            Some(*m)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPointRecord {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// `sup_t |x_t(x) - x_t(y)|` over the recorded times.
    pub sup: f64,
    /// Either point exploded; distances stop at the first explosion.
    pub exploded: bool,
}

impl TwoPointRecord {
    pub fn terminal_distance(&self) -> Option<f64> {
        if self.exploded {
            None
        } else {
            self.distances.last().copied()
        }
    }
}

pub fn two_point_from(tx: &Trajectory, ty: &Trajectory, x: &[f64], y: &[f64]) -> TwoPointRecord {
    let distances: Vec<f64> = tx.states().zip(ty.states()).map(|(a, b)| distance(a, b)).collect();
    TwoPointRecord {
        x: x.to_vec(),
        y: y.to_vec(),
        times: tx.times()[..distances.len()].to_vec(),
        sup: distances.iter().copied().fold(0.0, f64::max),
        distances,
        exploded: tx.exploded().is_some() || ty.exploded().is_some(),
    }
}

/// Two-point motion of `x` and `y` on a shared path.
pub fn two_point(
    sys: &VectorFieldSystem,
    path: &DyadicPath,
    resolution: Resolution,
    x: &[f64],
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<TwoPointRecord> {
    let n = resolution.level(path);
    let tx = solve_regularized(sys, path, n, x, cfg)?;
    let ty = solve_regularized(sys, path, n, y, cfg)?;
    Ok(two_point_from(&tx, &ty, x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeomorphismReport {
    pub t: f64,
    pub points: usize,
    /// Trajectories that exploded at or before `t`.
    pub explosions: usize,
    /// `min |x_t(x) - x_t(y)|` over distinct surviving pairs.
    pub injectivity_margin: f64,
    /// Strict order preservation; only meaningful in one dimension.
    pub order_preserved: Option<bool>,
    pub alpha: f64,
    /// `max |x_t(x) - x_t(y)| / |x - y|^alpha` over nearest-neighbour pairs.
    pub modulus: f64,
}

impl HomeomorphismReport {
    pub fn pass(&self) -> bool {
        self.explosions == 0 && self.injectivity_margin > 0.0 && self.order_preserved != Some(false)
    }
}

/// Injectivity, order, continuity modulus and explosion count of the flow map at time `t`.
pub fn homeomorphism_report(flow: &FlowResult, t: f64, alpha: f64) -> Result<HomeomorphismReport> {
    if flow.initial_points.len() < 2 {
        return Err(invalid("homeomorphism diagnostics need at least two points"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut alive: Vec<(&[f64], &[f64])> = Vec::with_capacity(flow.initial_points.len());
    for (x, tr) in flow.initial_points.iter().zip(&flow.trajectories) {
        if let Some(s) = tr.state_at(t)? {
            alive.push((x, s));
        }
    }
    let explosions = flow.initial_points.len() - alive.len();

    let mut margin = f64::INFINITY;
    let mut modulus: f64 = 0.0;
    for (i, (xi, si)) in alive.iter().enumerate() {
        let mut nearest = (f64::INFINITY, 0.0);
        for (j, (xj, sj)) in alive.iter().enumerate() {
            if i == j {
                continue;
            }
            let d0 = distance(xi, xj);
            let dt = distance(si, sj);
            margin = margin.min(dt);
            if d0 < nearest.0 {
                nearest = (d0, dt);
            }
        }
        if nearest.0.is_finite() {
            modulus = modulus.max(nearest.1 / nearest.0.powf(alpha));
        }
    }

    let order_preserved = (alive.first().map(|(x, _)| x.len()) == Some(1)).then(|| {
        let mut sorted = alive.clone();
        sorted.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        sorted.windows(2).all(|w| w[0].1[0] < w[1].1[0])
    });

    Ok(HomeomorphismReport {
        t,
        points: flow.initial_points.len(),
        explosions,
        injectivity_margin: if alive.len() < 2 { 0.0 } else { margin },
        order_preserved,
        alpha,
        modulus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::families;
    use crate::wiener::sample_path;
    use proptest::prelude::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn grid_validation() {
        assert!(FlowGrid::new(vec![], 1.0).is_err());
        assert!(FlowGrid::new(vec![vec![2.0]], 1.0).is_err());
        assert!(FlowGrid::new(vec![vec![0.5], vec![0.5]], 1.0).is_err());
        assert!(FlowGrid::new(vec![vec![0.5], vec![0.5, 0.0]], 1.0).is_err());
        assert!(FlowGrid::new(vec![vec![0.5], vec![-0.5]], 1.0).is_ok());
    }

    #[test]
    fn ball_lattices_fit_inside_and_have_requested_size() {
        for d in 1..=4 {
            let g = FlowGrid::ball_lattice(d, 4.0, 50).unwrap();
            assert_eq!(g.len(), 50);
            assert!(g.points().iter().all(|p| norm(p) <= 4.0 + 1e-12));
        }
    }

    #[test]
    fn near_pairs_shrink_dyadically() {
        let pairs = FlowGrid::near_pairs(&[1.0, 0.0], &[0.0, 2.0], 10).unwrap();
        assert_eq!(pairs.len(), 10);
        for (k, (x, y)) in pairs.iter().enumerate() {
            assert!((distance(x, y) - (-(k as f64 + 1.0)).exp2()).abs() < 1e-15);
        }
        assert!(FlowGrid::near_pairs(&[1.0], &[0.0], 3).is_err());
    }

    #[test]
    fn single_point_flow_matches_solver() {
        let sys = families::trigonometric(1.0, 0.5, 2, 2).unwrap();
        let path = sample_path(8, 2, 5).unwrap();
        let grid = FlowGrid::new(vec![vec![0.3, -0.2]], 1.0).unwrap();
        let f = simulate_flow(&sys, &path, Resolution::Level(6), &grid, &cfg()).unwrap();
        let direct = solve_regularized(&sys, &path, 6, &[0.3, -0.2], &cfg()).unwrap();
        assert_eq!(f.trajectories[0], direct);
    }

    #[test]
    fn linear_flow_is_affine() {
        let sys = families::rotation(0.8, -0.3).unwrap();
        let path = sample_path(8, 1, 12).unwrap();
        let grid = FlowGrid::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]], 2.0).unwrap();
        let f = simulate_flow(&sys, &path, Resolution::Level(8), &grid, &cfg()).unwrap();
        let (a, b, m) = (
            f.trajectories[0].terminal().unwrap(),
            f.trajectories[1].terminal().unwrap(),
            f.trajectories[2].terminal().unwrap(),
        );
        for j in 0..2 {
            assert!((m[j] - 0.5 * (a[j] + b[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_sup_process_and_two_point_closed_forms() {
        let sys = families::geometric(1.0, 0.0).unwrap();
        let path = sample_path(8, 1, 31).unwrap();
        let n = 8;
        let tr = solve_regularized(&sys, &path, n, &[0.7], &cfg()).unwrap();
        let y = sup_process(&tr);
        assert_eq!(y[0], 0.7);
        assert!(y.windows(2).all(|w| w[0] <= w[1]));
        let wmax = (0..=256).map(|k| path.node(8, k).unwrap()[0]).fold(f64::MIN, f64::max);
        assert!((y.last().unwrap() - 0.7 * wmax.exp()).abs() < 1e-8 * y.last().unwrap());

        let rec = two_point(&sys, &path, Resolution::Level(n), &[0.7], &[0.9], &cfg()).unwrap();
        assert!((rec.sup - 0.2 * wmax.exp()).abs() < 1e-8);
        assert!(rec.distances.iter().all(|d| *d <= rec.sup));
        let same = two_point(&sys, &path, Resolution::Level(n), &[0.7], &[0.7], &cfg()).unwrap();
        assert!(same.distances.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn homeomorphism_report_at_time_zero_is_identity() {
        let sys = families::trigonometric(1.0, 0.5, 2, 1).unwrap();
        let path = sample_path(6, 1, 3).unwrap();
        let grid = FlowGrid::ball_lattice(2, 1.0, 10).unwrap();
        let f = simulate_flow(&sys, &path, Resolution::Level(6), &grid, &cfg()).unwrap();
        let r = homeomorphism_report(&f, 0.0, 0.5).unwrap();
        let mut min_gap = f64::INFINITY;
        for (i, a) in grid.points().iter().enumerate() {
            for b in &grid.points()[i + 1..] {
                min_gap = min_gap.min(distance(a, b));
            }
        }
        assert_eq!(r.injectivity_margin, min_gap);
        assert_eq!(r.explosions, 0);
        assert_eq!(r.order_preserved, None);
        assert!(r.pass());
    }

    #[test]
    fn geometric_1d_margin_scales_with_exponential() {
        let sys = families::geometric(1.0, 0.0).unwrap();
        let path = sample_path(8, 1, 8).unwrap();
        let grid = FlowGrid::new(vec![vec![-1.0], vec![0.25], vec![0.5], vec![1.0]], 1.0).unwrap();
        let f = simulate_flow(&sys, &path, Resolution::Level(8), &grid, &cfg()).unwrap();
        let r = homeomorphism_report(&f, 0.5, 0.5).unwrap();
        let w = path.node(8, 128).unwrap()[0];
        assert!((r.injectivity_margin - 0.25 * w.exp()).abs() < 1e-8);
        assert_eq!(r.order_preserved, Some(true));
    }

    #[test]
    fn explosive_counterexample_is_counted() {
        let sys = families::explosive(1, 0.0).unwrap();
        let path = sample_path(10, 1, 0).unwrap();
        let grid = FlowGrid::new(vec![vec![0.0], vec![1.0], vec![2.0]], 2.0).unwrap();
        let f = simulate_flow(&sys, &path, Resolution::Level(10), &grid, &cfg()).unwrap();
        assert_eq!(homeomorphism_report(&f, 0.25, 0.5).unwrap().explosions, 0);
        let late = homeomorphism_report(&f, 0.75, 0.5).unwrap();
        assert_eq!(late.explosions, 1);
        assert!(!late.pass());
    }

    #[test]
    fn snapshot_csv_layout() {
        let sys = families::explosive(1, 0.0).unwrap();
        let path = sample_path(4, 1, 0).unwrap();
        let grid = FlowGrid::new(vec![vec![0.0], vec![2.0]], 2.0).unwrap();
        let f = simulate_flow(&sys, &path, Resolution::Level(4), &grid, &cfg()).unwrap();
        let mut buf = Vec::new();
        f.write_snapshot_csv(1.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x1,y1,exploded");
        assert!(lines[1].ends_with(",0"));
        assert!(lines[2].ends_with("NaN,1"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn permuting_grid_points_leaves_trajectories_unchanged(seed in any::<u64>(), rot in 0usize..7) {
            let sys = families::log_growth(&families::LogGrowthParams::default(), 2, 2).unwrap();
            let path = sample_path(6, 2, seed).unwrap();
            let grid = FlowGrid::ball_lattice(2, 3.0, 7).unwrap();
            let mut pts = grid.points().to_vec();
            pts.rotate_left(rot);
            let permuted = FlowGrid::new(pts, 3.0).unwrap();
            let a = simulate_flow(&sys, &path, Resolution::Level(6), &grid, &cfg()).unwrap();
            let b = simulate_flow(&sys, &path, Resolution::Level(6), &permuted, &cfg()).unwrap();
            for (i, tr) in a.trajectories.iter().enumerate() {
                prop_assert_eq!(tr, &b.trajectories[(i + 7 - rot) % 7]);
            }
        }

        #[test]
        fn one_dimensional_trajectories_never_cross(seed in any::<u64>()) {
            let sys = families::log_growth(&families::LogGrowthParams::default(), 1, 1).unwrap();
            let path = sample_path(8, 1, seed).unwrap();
            let grid = FlowGrid::ball_lattice(1, 2.0, 9).unwrap();
            let f = simulate_flow(&sys, &path, Resolution::Level(8), &grid, &cfg()).unwrap();
            for k in 0..f.trajectories[0].len() {
                for w in f.trajectories.windows(2) {
                    prop_assert!(w[0].state(k)[0] < w[1].state(k)[0]);
                }
            }
        }

        #[test]
        fn truncation_equality_for_two_point_distances(seed in any::<u64>(), m in 2.0f64..5.0) {
            let sys = families::log_growth(&families::LogGrowthParams::default(), 2, 2).unwrap();
            let trunc = sys.truncate(m).unwrap();
            let path = sample_path(7, 2, seed).unwrap();
            let c = SolverConfig { output_level_cap: 7, ..cfg() };
            let (x, y) = ([0.4, -0.3], [0.45, -0.3]);
            let full = two_point(&sys, &path, Resolution::Level(7), &x, &y, &c).unwrap();
            let tx = solve_regularized(&sys, &path, 7, &x, &c).unwrap();
            let ty = solve_regularized(&sys, &path, 7, &y, &c).unwrap();
            let sup = sup_process(&tx).last().copied().unwrap().max(*sup_process(&ty).last().unwrap());
            prop_assume!(sup < m);
            let cut = two_point(&trunc, &path, Resolution::Level(7), &x, &y, &c).unwrap();
            for (a, b) in full.distances.iter().zip(&cut.distances) {
                prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-3));
            }
        }
    }
}
