use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_900_4;
/// Sample kurtosis above which the normal-approximation interval is flagged.
pub const KURTOSIS_LIMIT: f64 = 100.0;

/// Monte Carlo estimate of `E|X|^p` with mergeable central-moment statistics.
///
/// Samples are stored as `v = |x|^p`; the mean of `v` is the estimate. Shards
/// merge with the pairwise update for the first four central moments, so the
/// result does not depend on how samples were split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub order: f64,
    pub count: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    pub min: f64,
    pub max: f64,
    /// Samples that were NaN or infinite (explosions); excluded from the statistics.
    pub non_finite: u64,
}

impl MomentEstimate {
    pub fn new(order: f64) -> Self {
        Self {
            order,
            count: 0,
            mean: 0.0,
            m2: 0.0,
            m3: 0.0,
            m4: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            non_finite: 0,
        }
    }

    /// Estimate of `E|x|^p` from raw samples `x`.
    pub fn from_samples(order: f64, samples: &[f64]) -> Self {
        let mut e = Self::new(order);
        samples.iter().for_each(|x| e.push(*x));
        e
    }

    /// Estimate of `E v` from values that already are `|x|^p`.
    pub fn from_powers(order: f64, values: &[f64]) -> Self {
        let mut e = Self::new(order);
        values.iter().for_each(|v| e.push_power(*v));
        e
    }

    pub fn push(&mut self, x: f64) {
        self.push_power(x.abs().powf(self.order));
    }

    pub fn push_power(&mut self, v: f64) {
        if !v.is_finite() {
            self.non_finite += 1;
            return;
        }
        let mut one = Self::new(self.order);
        one.count = 1;
        one.mean = v;
        one.min = v;
        one.max = v;
        self.merge(&one);
    }

    /// Pairwise combination of central moments (Pébay 2008).
    pub fn merge(&mut self, other: &MomentEstimate) {
        self.non_finite += other.non_finite;
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            let nf = self.non_finite;
            *self = other.clone();
            self.non_finite = nf;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d_n = delta / n;
        let d_n2 = d_n * d_n;
        let m2 = self.m2 + other.m2 + delta * d_n * na * nb;
        let m3 = self.m3 + other.m3 + delta * d_n2 * na * nb * (na - nb) + 3.0 * d_n * (na * other.m2 - nb * self.m2);
        let m4 = self.m4
            + other.m4
            + delta * d_n2 * d_n * na * nb * (na * na - na * nb + nb * nb)
            + 6.0 * d_n2 * (na * na * other.m2 + nb * nb * self.m2)
            + 4.0 * d_n * (na * other.m3 - nb * self.m3);
        self.mean += d_n * nb;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    /// Point estimate of `E|X|^p`.
    pub fn estimate(&self) -> f64 {
        self.mean
    }

    pub fn sum(&self) -> f64 {
        self.mean * self.count as f64
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.m2 + self.count as f64 * self.mean * self.mean
    }

    /// Unbiased sample variance of the `|x|^p` values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    /// 99% normal-approximation half-width.
    pub fn half_width(&self) -> f64 {
        Z_99 * self.standard_error()
    }

    pub fn kurtosis(&self) -> f64 {
        if self.m2 <= 0.0 {
            return 0.0;
        }
        self.count as f64 * self.m4 / (self.m2 * self.m2)
    }

    pub fn ci_unreliable(&self) -> bool {
        self.kurtosis() > KURTOSIS_LIMIT
    }

    /// `(E|X|^p)^{1/p}` and the half-width of its interval from the upper endpoint.
    pub fn norm(&self) -> (f64, f64) {
        let v = self.mean.max(0.0).powf(1.0 / self.order);
        let hi = (self.mean + self.half_width()).max(0.0).powf(1.0 / self.order);
        (v, hi - v)
    }

    /// `|value - estimate| <= k` half-widths.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (value - self.mean).abs() <= k * self.half_width()
    }
}

/// Evaluate `f(seed, index)` for `index in 0..count` in parallel; results keep index order.
pub fn collect_samples<T, F>(count: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(|i| f(seed, i)).collect()
}

/// Monte Carlo estimate of `E|X|^p` where `X = sampler(seed, index)`.
/// Non-finite samples are counted separately.
pub fn estimate_moment<F>(sampler: F, p: f64, count: usize, seed: u64) -> Result<MomentEstimate>
where
    F: Fn(u64, u64) -> Result<f64> + Sync + Send,
{
    if !(p >= 1.0) {
        return Err(invalid(format!("moment order must be >= 1, got {p}")));
    }
    if count < 100 {
        return Err(invalid(format!("at least 100 samples are required, got {count}")));
    }
    let samples = collect_samples(count, seed, sampler)?;
    Ok(MomentEstimate::from_samples(p, &samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiener::{gaussian_abs_moment, GaussianStream};
    use proptest::prelude::*;

    fn gaussian(seed: u64, i: u64) -> Result<f64> {
        Ok(GaussianStream::new(seed, i).next_gaussian())
    }

    #[test]
    fn constant_sampler_has_zero_width() {
        let e = estimate_moment(|_, _| Ok(1.5), 3.0, 200, 0).unwrap();
        assert!((e.estimate() - 1.5f64.powi(3)).abs() < 1e-12);
        assert_eq!(e.half_width(), 0.0);
        assert_eq!((e.min, e.max), (e.estimate(), e.estimate()));
    }

    #[test]
    fn preconditions() {
        assert!(estimate_moment(|_, _| Ok(1.0), 0.5, 200, 0).is_err());
        assert!(estimate_moment(|_, _| Ok(1.0), 2.0, 99, 0).is_err());
    }

    #[test]
    fn gaussian_moments_within_three_half_widths() {
        let e4 = estimate_moment(gaussian, 4.0, 200_000, 11).unwrap();
        assert!(e4.within(3.0, 3.0), "{} +- {}", e4.estimate(), e4.half_width());
        let e3 = estimate_moment(gaussian, 3.0, 200_000, 12).unwrap();
        assert!(e3.within(gaussian_abs_moment(3.0).unwrap(), 3.0));
        assert!((gaussian_abs_moment(3.0).unwrap() - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn non_finite_samples_are_counted_not_averaged() {
        let e = estimate_moment(
            |_, i| Ok(if i % 10 == 0 { f64::INFINITY } else { 2.0 }),
            1.0,
            100,
            0,
        )
        .unwrap();
        assert_eq!(e.non_finite, 10);
        assert_eq!(e.count, 90);
        assert_eq!(e.estimate(), 2.0);
    }

    #[test]
    fn statistics_match_two_pass_oracle() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 100.0).collect();
        let e = MomentEstimate::from_powers(1.0, &xs);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let m4: f64 = xs.iter().map(|x| (x - mean).powi(4)).sum();
        assert!((e.mean - mean).abs() < 1e-12);
        assert!((e.variance() - m2 / (n - 1.0)).abs() < 1e-9);
        assert!((e.kurtosis() - n * m4 / (m2 * m2)).abs() < 1e-9);
        assert!((e.sum_of_squares() - xs.iter().map(|x| x * x).sum::<f64>()).abs() < 1e-6);
    }

    #[test]
    fn heavy_tails_flag_the_interval() {
        let mut xs = vec![1.0; 10_000];
        xs[0] = 1e6;
        assert!(MomentEstimate::from_powers(1.0, &xs).ci_unreliable());
        assert!(!MomentEstimate::from_powers(1.0, &[1.0, 2.0, 3.0, 4.0]).ci_unreliable());
    }

    #[test]
    fn half_width_shrinks_like_inverse_root_count() {
        let xs: Vec<f64> = (0..40_000).map(|i| gaussian(3, i).unwrap()).collect();
        let small = MomentEstimate::from_samples(2.0, &xs[..10_000]);
        let big = MomentEstimate::from_samples(2.0, &xs);
        let ratio = small.half_width() / big.half_width();
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn merge_is_order_independent(
            xs in prop::collection::vec(0.0f64..100.0, 10..200),
            cuts in prop::collection::vec(0usize..200, 1..6),
        ) {
            let whole = MomentEstimate::from_samples(2.0, &xs);
            let mut bounds: Vec<usize> = cuts.iter().map(|c| c % xs.len()).collect();
            bounds.push(0);
            bounds.push(xs.len());
            bounds.sort_unstable();
            let shards: Vec<MomentEstimate> = bounds
                .windows(2)
                .map(|w| MomentEstimate::from_samples(2.0, &xs[w[0]..w[1]]))
                .collect();
            let mut forward = MomentEstimate::new(2.0);
            shards.iter().for_each(|s| forward.merge(s));
            let mut backward = MomentEstimate::new(2.0);
            shards.iter().rev().for_each(|s| backward.merge(s));
            for e in [&forward, &backward] {
                prop_assert_eq!(e.count, whole.count);
                prop_assert_eq!(e.min, whole.min);
                prop_assert_eq!(e.max, whole.max);
                let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
                prop_assert!(rel(e.sum(), whole.sum()));
                prop_assert!(rel(e.sum_of_squares(), whole.sum_of_squares()));
            }
        }
    }
}
