//! Accumulators and reductions whose results do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::RandomStream;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Samples per parallel work unit in Monte Carlo loops.
pub const MC_CHUNK: usize = 4096;

/// Reduces `items` with `f` along a fixed balanced binary tree.
pub fn pairwise_reduce<T, F>(mut items: Vec<T>, f: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(f(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Running mean and variance (Welford, merged with Chan's update).
///
/// A stream of identical values yields exactly that value as the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanAcc {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl MeanAcc {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * (other.n as f64 / n as f64);
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        Self { n, mean, m2 }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    /// 95% normal-approximation half-width of the mean.
    pub fn ci95(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        Z95 * (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.mean,
            ci: self.ci95(),
        }
    }
}

impl FromIterator<f64> for MeanAcc {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MeanAcc::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// A Monte Carlo value with its 95% half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci: f64,
}

/// Mean of `sample(i)` for `i in 0..n`, evaluated in fixed chunks in parallel.
pub fn parallel_mean<F>(n: usize, sample: F) -> MeanAcc
where
    F: Fn(usize) -> f64 + Sync,
{
    parallel_mean_with(n, || (), |_, i| sample(i))
}

/// As [`parallel_mean`] with per-chunk scratch state built by `init`.
pub fn parallel_mean_with<S, I, F>(n: usize, init: I, sample: F) -> MeanAcc
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, usize) -> f64 + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let parts: Vec<MeanAcc> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init();
            let mut acc = MeanAcc::default();
            for i in c * MC_CHUNK..((c + 1) * MC_CHUNK).min(n) {
                acc.push(sample(&mut state, i));
            }
            acc
        })
        .collect();
    pairwise_reduce(parts, MeanAcc::merge).unwrap_or_default()
}

/// Percentile bootstrap 95% interval of the mean, reported as a half-width
/// (half the distance between the 2.5% and 97.5% quantiles).
pub fn bootstrap_ci95(samples: &[f64], resamples: usize, stream: RandomStream) -> f64 {
    let n = samples.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|r| {
            let mut s = stream.split(r as u64);
            let acc: MeanAcc = (0..n)
                .map(|_| samples[(s.next_u64() % n as u64) as usize])
                .collect();
            acc.mean
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = means[((resamples as f64) * 0.025).floor() as usize];
    let hi = means[(((resamples as f64) * 0.975).ceil() as usize).min(resamples - 1)];
    0.5 * (hi - lo)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_reduce_sums() {
        let v: Vec<u64> = (1..=10).collect();
        assert_eq!(pairwise_reduce(v, |a, b| a + b), Some(55));
        assert_eq!(pairwise_reduce(Vec::<u64>::new(), |a, b| a + b), None);
    }

    #[test]
    fn constant_stream_mean_is_exact() {
        let c = 0.1 + 0.2;
        let acc = parallel_mean(10_000, |_| c);
        assert_eq!(acc.mean, c);
        assert_eq!(acc.variance(), 0.0);
    }

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.3).collect();
        let seq: MeanAcc = xs.iter().copied().collect();
        let a: MeanAcc = xs[..313].iter().copied().collect();
        let b: MeanAcc = xs[313..].iter().copied().collect();
        let m = a.merge(b);
        assert_eq!(m.n, seq.n);
        assert!((m.mean - seq.mean).abs() < 1e-12);
        assert!((m.variance() - seq.variance()).abs() < 1e-9);
    }

    #[test]
    fn parallel_mean_is_thread_independent() {
        let f = |i: usize| ((i as f64) * 0.7).sin();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| parallel_mean(50_000, f));
        let b = four.install(|| parallel_mean(50_000, f));
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_close_to_normal_ci() {
        let mut s = RandomStream::new(4, 4);
        let xs: Vec<f64> = (0..2000).map(|_| s.next_normal()).collect();
        let acc: MeanAcc = xs.iter().copied().collect();
        let boot = bootstrap_ci95(&xs, 500, RandomStream::new(4, 5));
        assert!((boot / acc.ci95() - 1.0).abs() < 0.2, "{boot} vs {}", acc.ci95());
        assert_eq!(bootstrap_ci95(&[3.0; 10], 100, RandomStream::new(1, 1)), 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = x.iter().map(|lx| 3.0 - 0.5 * lx).collect();
        assert!((ols_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
