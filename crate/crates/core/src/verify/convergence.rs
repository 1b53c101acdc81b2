//! Pathwise convergence of the regularized flow to a high-resolution reference.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::estimate::{collect_samples, MomentEstimate};
use super::inequality::ls_slope;
use crate::error::{invalid, Result};
use crate::fields::VectorFieldSystem;
use crate::flow::FlowGrid;
use crate::integrate::{solve_predictor_corrector, solve_regularized, SolverConfig, Trajectory};
use crate::wiener::{DyadicPath, MAX_LEVEL};
use crate::distance;

/// Levels added on top of the finest compared level to obtain the reference level.
pub const REFERENCE_MARGIN: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub level: u32,
    pub mean: f64,
    pub median: f64,
    /// `E err^p` over retained paths.
    pub moment: MomentEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub reference_level: u32,
    /// Output level shared by every compared trajectory.
    pub grid_level: u32,
    pub grid_points: usize,
    pub paths: usize,
    pub seed: u64,
    /// Paths dropped because some trajectory crossed the explosion threshold.
    pub discarded: usize,
    pub levels: Vec<LevelError>,
    /// Least-squares slope of `log2(median error)` against the level.
    pub median_slope: f64,
    /// Median over paths of `max_x sup_t |reference - predictor-corrector|`.
    pub reference_disagreement: f64,
    pub reference_disagreement_max: f64,
}

impl ConvergenceCurve {
    pub fn medians(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.median).collect()
    }

    /// Median error at the finest level divided by the median at the coarsest.
    pub fn reduction(&self) -> f64 {
        let m = self.medians();
        m[m.len() - 1] / m[0]
    }

    pub fn monotone(&self) -> bool {
        self.medians().windows(2).all(|w| w[1] <= w[0])
    }

    /// CSV with header `level,mean_sup_error,median_sup_error,moment_sup_error`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "level,mean_sup_error,median_sup_error,moment_sup_error")?;
        for l in &self.levels {
            writeln!(w, "{},{:e},{:e},{:e}", l.level, l.mean, l.median, l.moment.estimate())?;
        }
        Ok(())
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn sup_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states().zip(b.states()).map(|(u, v)| distance(u, v)).fold(0.0, f64::max)
}

struct PathErrors {
    per_level: Vec<f64>,
    disagreement: f64,
}

/// Per-level sup errors `max_x sup_t |z^n_t(x) - z^ref_t(x)|` on shared paths.
///
/// The reference is the regularized flow at `max(levels) + 4`; it is
/// cross-checked against the predictor-corrector scheme on the same increments.
pub fn convergence_curve(
    sys: &VectorFieldSystem,
    grid: &FlowGrid,
    levels: &[u32],
    paths: usize,
    seed: u64,
    p: f64,
    cfg: &SolverConfig,
) -> Result<ConvergenceCurve> {
    cfg.validate()?;
    if levels.is_empty() || paths == 0 {
        return Err(invalid("convergence needs at least one level and one path"));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("levels must be strictly increasing"));
    }
    if grid.dim() != sys.dim_state() {
        return Err(crate::Error::Dimension {
            expected: sys.dim_state(),
            got: grid.dim(),
        });
    }
    if !(p >= 1.0) {
        return Err(invalid(format!("moment order must be >= 1, got {p}")));
    }
    let reference_level = levels[levels.len() - 1] + REFERENCE_MARGIN;
    if reference_level > MAX_LEVEL {
        return Err(crate::Error::LevelOutOfRange {
            level: reference_level,
            max: MAX_LEVEL,
        });
    }
    let grid_level = reference_level.min(cfg.output_level_cap);
    let cfg = SolverConfig {
        fixed_output_level: Some(grid_level),
        ..*cfg
    };
    let rows: Vec<Option<PathErrors>> = collect_samples(paths, seed, |_, i| {
        let path = DyadicPath::generate(reference_level, sys.dim_noise(), seed, i)?;
        let mut per_level = vec![0.0f64; levels.len()];
        let mut disagreement = 0.0f64;
        for x in grid.points() {
            let reference = solve_regularized(sys, &path, reference_level, x, &cfg)?;
            let check = solve_predictor_corrector(sys, &path, x, &cfg)?;
            if reference.exploded().is_some() || check.exploded().is_some() {
                return Ok(None);
            }
            disagreement = disagreement.max(sup_gap(&reference, &check));
            for (slot, &n) in per_level.iter_mut().zip(levels) {
                let z = solve_regularized(sys, &path, n, x, &cfg)?;
                if z.exploded().is_some() {
                    return Ok(None);
                }
                *slot = slot.max(sup_gap(&z, &reference));
            }
        }
        Ok(Some(PathErrors {
            per_level,
            disagreement,
        }))
    })?;
    let kept: Vec<&PathErrors> = rows.iter().flatten().collect();
    if kept.is_empty() {
        return Err(invalid("every path exploded; no convergence statistics"));
    }
    let level_stats: Vec<LevelError> = levels
        .iter()
        .enumerate()
        .map(|(j, &level)| {
            let errs: Vec<f64> = kept.iter().map(|r| r.per_level[j]).collect();
            LevelError {
                level,
                mean: errs.iter().sum::<f64>() / errs.len() as f64,
                median: median(&errs),
                moment: MomentEstimate::from_samples(p, &errs),
            }
        })
        .collect();
    let xs: Vec<f64> = levels.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = level_stats.iter().map(|l| l.median.log2()).collect();
    let disagreements: Vec<f64> = kept.iter().map(|r| r.disagreement).collect();
    Ok(ConvergenceCurve {
        reference_level,
        grid_level,
        grid_points: grid.len(),
        paths,
        seed,
        discarded: paths - kept.len(),
        median_slope: if levels.len() >= 2 { ls_slope(&xs, &ys) } else { f64::NAN },
        levels: level_stats,
        reference_disagreement: median(&disagreements),
        reference_disagreement_max: disagreements.iter().copied().fold(0.0, f64::max),
    })
}
