//! Brownian sample paths on the finest dyadic grid.
//!
//! One path is sampled once at level `n_max`; every coarser piecewise-linear
//! interpolant `w^n` reads the stored values at the level-`n` nodes, so all
//! levels share the same underlying sample.
//!
//! Gaussians come from the inverse normal CDF applied to a ChaCha8 stream
//! keyed by `(seed, path index)`; the `k`-th draw of a stream is the
//! increment of component `k mod N` on finest interval `k / N`. Output is a
//! pure function of `(n_max, N, seed, index)`.

use std::io::{self, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};

/// Finest admissible level (2^24 intervals).
pub const MAX_LEVEL: u32 = 24;

/// Uniform in the open interval `(0, 1)` from the top 53 bits.
#[inline]
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Stream of standard Gaussians keyed by `(seed, stream)`.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            normal: Normal::new(0.0, 1.0).expect("standard normal"),
        }
    }

    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        self.normal.inverse_cdf(open_uniform(&mut self.rng))
    }

    pub fn next_uniform(&mut self) -> f64 {
        open_uniform(&mut self.rng)
    }
}

/// A Brownian sample `w : [0, 1] -> R^N` stored at `k 2^{-n_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicPath {
    n_max: u32,
    noise_dim: usize,
    /// Row-major `(2^n_max + 1) x N`.
    values: Vec<f64>,
    seed: u64,
    index: u64,
}

fn check_level(level: u32, max: u32) -> Result<()> {
    if level > max {
        return Err(Error::LevelOutOfRange { level, max });
    }
    Ok(())
}

/// `sample_path(n_max, N, seed)`: path number 0 of the stream family `seed`.
pub fn sample_path(n_max: u32, noise_dim: usize, seed: u64) -> Result<DyadicPath> {
    DyadicPath::generate(n_max, noise_dim, seed, 0)
}

impl DyadicPath {
    /// Path `index` of the family keyed by `seed`.
    pub fn generate(n_max: u32, noise_dim: usize, seed: u64, index: u64) -> Result<Self> {
        if n_max == 0 {
            return Err(invalid("finest level must be at least 1"));
        }
        check_level(n_max, MAX_LEVEL)?;
        if noise_dim == 0 {
            return Err(invalid("noise dimension must be positive"));
        }
        let steps = 1usize << n_max;
        let scale = (-(n_max as f64) / 2.0).exp2();
        let mut values = vec![0.0; (steps + 1) * noise_dim];
        let mut g = GaussianStream::new(seed, index);
        for k in 0..steps {
            for i in 0..noise_dim {
                let prev = values[k * noise_dim + i];
                values[(k + 1) * noise_dim + i] = prev + scale * g.next_gaussian();
            }
        }
        Ok(Self {
            n_max,
            noise_dim,
            values,
            seed,
            index,
        })
    }

    /// Wrap explicit node values (`(2^n_max + 1) * N` numbers, zero first row).
    pub fn from_values(n_max: u32, noise_dim: usize, values: Vec<f64>) -> Result<Self> {
        if n_max == 0 || noise_dim == 0 {
            return Err(invalid("level and noise dimension must be positive"));
        }
        check_level(n_max, MAX_LEVEL)?;
        let expected = ((1usize << n_max) + 1) * noise_dim;
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: values.len(),
            });
        }
        if values[..noise_dim].iter().any(|v| *v != 0.0) {
            return Err(invalid("path must start at the origin"));
        }
        Ok(Self {
            n_max,
            noise_dim,
            values,
            seed: 0,
            index: 0,
        })
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn finest_steps(&self) -> usize {
        1usize << self.n_max
    }

    /// `w(k 2^{-level})`.
    pub fn node(&self, level: u32, k: usize) -> Result<&[f64]> {
        check_level(level, self.n_max)?;
        if k > (1usize << level) {
            return Err(invalid(format!("node {k} beyond level {level} grid")));
        }
        Ok(self.node_unchecked(level, k))
    }

    #[inline]
    pub(crate) fn node_unchecked(&self, level: u32, k: usize) -> &[f64] {
        let row = k << (self.n_max - level);
        &self.values[row * self.noise_dim..(row + 1) * self.noise_dim]
    }

    /// Increment over the `k`-th level-`level` interval, written into `out`.
    #[inline]
    pub(crate) fn increment_into(&self, level: u32, k: usize, out: &mut [f64]) {
        let a = self.node_unchecked(level, k);
        let b = self.node_unchecked(level, k + 1);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = y - x;
        }
    }

    fn interval(level: u32, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("time {t} outside [0, 1]")));
        }
        let cells = 1usize << level;
        Ok(((t * cells as f64).floor() as usize).min(cells - 1))
    }

    /// Constant slope `2^n (w((l+1) 2^{-n}) - w(l 2^{-n}))` of `w^n` on the
    /// interval containing `t` (`t = 1` belongs to the last interval).
    pub fn interpolant_slope(&self, n: u32, t: f64) -> Result<Vec<f64>> {
        check_level(n, self.n_max)?;
        let l = Self::interval(n, t)?;
        let mut out = vec![0.0; self.noise_dim];
        self.increment_into(n, l, &mut out);
        let scale = (n as f64).exp2();
        out.iter_mut().for_each(|v| *v *= scale);
        Ok(out)
    }

    /// Value of the piecewise-linear interpolant `w^n` at time `t`.
    pub fn interpolant_value(&self, n: u32, t: f64) -> Result<Vec<f64>> {
        check_level(n, self.n_max)?;
        let l = Self::interval(n, t)?;
        let left = (l as f64) * (-(n as f64)).exp2();
        let slope = self.interpolant_slope(n, t)?;
        Ok(self
            .node_unchecked(n, l)
            .iter()
            .zip(&slope)
            .map(|(w, c)| w + c * (t - left))
            .collect())
    }

    /// `2^{n/2} sum_i |w^i(s_n^+) - w^i(s_n)|` for the level-`n` interval holding `s`.
    pub fn gamma_n(&self, n: u32, s: f64) -> Result<f64> {
        check_level(n, self.n_max)?;
        let l = Self::interval(n, s)?;
        let a = self.node_unchecked(n, l);
        let b = self.node_unchecked(n, l + 1);
        let sum: f64 = a.iter().zip(b).map(|(x, y)| (y - x).abs()).sum();
        Ok((n as f64 / 2.0).exp2() * sum)
    }

    /// Componentwise `lambda * w`.
    pub fn scaled(&self, lambda: f64) -> DyadicPath {
        DyadicPath {
            values: self.values.iter().map(|v| v * lambda).collect(),
            ..self.clone()
        }
    }

    /// CSV dump with header `t,w1..wN`, one row per finest node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.noise_dim).map(|i| format!("w{i}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        let dt = (-(self.n_max as f64)).exp2();
        for k in 0..=self.finest_steps() {
            let row: Vec<String> = self.node_unchecked(self.n_max, k).iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{:e},{}", k as f64 * dt, row.join(","))?;
        }
        Ok(())
    }
}

/// `E|g|^q` for a standard Gaussian `g`: `2^{q/2} Gamma((q+1)/2) / sqrt(pi)`.
pub fn gaussian_abs_moment(q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(invalid(format!("moment order must be >= 1, got {q}")));
    }
    Ok((q / 2.0).exp2() * statrs::function::gamma::gamma((q + 1.0) / 2.0) / std::f64::consts::PI.sqrt())
}
