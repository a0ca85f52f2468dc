//! Paired Wilcoxon signed-rank test and percentile bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest effective sample size that uses the exact null distribution.
pub const EXACT_MAX_N: usize = 25;
pub const DEFAULT_RESAMPLES: usize = 5000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Two-sided p-value.
    pub p: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Rank-biserial correlation `(W+ - W-) / (W+ + W-)`.
    pub r: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub exact: bool,
    /// All differences were zero; `p` is reported as 1.
    pub degenerate: bool,
}

/// Midranks (1-based) of `values` in ascending order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> WilcoxonResult {
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return WilcoxonResult {
            p: 1.0,
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            r: 0.0,
            n: 0,
            exact: true,
            degenerate: true,
        };
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let exact = n <= EXACT_MAX_N;
    let p = if exact { exact_p(&ranks, w_plus) } else { normal_p(&ranks, w_plus) };
    WilcoxonResult {
        p,
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        r: (w_plus - w_minus) / total,
        n,
        exact,
        degenerate: false,
    }
}

/// Two-sided p from the exact permutation distribution of W+ given the
/// ranks. Ranks are doubled so midranks become integers.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let w = (w_plus * 2.0).round() as usize;
    let all: f64 = counts.iter().sum();
    let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
    let upper: f64 = counts[w..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let dev = ((w_plus - mean).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z)).min(1.0)
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(samples: &[f64], level: f64, resamples: usize, seed: u64) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let first = samples[0];
    if samples.iter().all(|x| *x == first) {
        return (first, first);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (percentile(&means, tail), percentile(&means, 1.0 - tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Two-sided p by listing all sign assignments of the ranks.
    fn enumerate_p(pairs: &[(f64, f64)]) -> f64 {
        let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
        let ranks = midranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
        let observed: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let n = ranks.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w <= observed + 1e-9 {
                le += 1;
            }
            if w >= observed - 1e-9 {
                ge += 1;
            }
        }
        let total = (1u64 << n) as f64;
        (2.0 * (le as f64 / total).min(ge as f64 / total)).min(1.0)
    }

    #[test]
    fn all_positive_six() {
        let pairs: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64 + 0.5, 0.0)).collect();
        let r = wilcoxon_signed_rank(&pairs);
        assert!((r.p - 2.0 / 64.0).abs() < 1e-15);
        assert_eq!(r.r, 1.0);
        assert_eq!(r.w_minus, 0.0);
        assert_eq!(r.statistic, 0.0);
        assert!(r.exact && !r.degenerate);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let r = wilcoxon_signed_rank(&[(1.0, 1.0), (0.5, 0.5)]);
        assert!(r.degenerate);
        assert_eq!(r.p, 1.0);
        assert_eq!(r.r, 0.0);
    }

    #[test]
    fn exact_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let n = rng.random_range(4..=10);
            let pairs: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
            let got = wilcoxon_signed_rank(&pairs).p;
            assert!((got - enumerate_p(&pairs)).abs() <= 1e-12);
        }
    }

    #[test]
    fn exact_with_ties_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let n = rng.random_range(4..=12);
            let pairs: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.random_range(0..4) as f64, rng.random_range(0..4) as f64)).collect();
            if pairs.iter().all(|(a, b)| a == b) {
                continue;
            }
            assert!((wilcoxon_signed_rank(&pairs).p - enumerate_p(&pairs)).abs() <= 1e-12, "{pairs:?}");
        }
    }

    #[test]
    fn normal_approximation() {
        let d: Vec<f64> = (1..=30).map(|i| if [3, 10, 17, 24].contains(&i) { -(i as f64) } else { i as f64 }).collect();
        let pairs: Vec<(f64, f64)> = d.iter().map(|x| (*x, 0.0)).collect();
        let r = wilcoxon_signed_rank(&pairs);
        assert!(!r.exact);
        assert_eq!(r.w_minus, 54.0);
        let mean = 30.0 * 31.0 / 4.0;
        let sd = (30.0f64 * 31.0 * 61.0 / 24.0).sqrt();
        let z = ((411.0f64 - mean).abs() - 0.5) / sd;
        let normal = Normal::new(0.0, 1.0).unwrap();
        assert!((r.p - 2.0 * normal.sf(z)).abs() < 1e-15);
        assert!(r.p < 1e-3);
    }

    #[test]
    fn midrank_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn percentile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 1.0), 4.0);
        assert!((percentile(&xs, 0.5) - 2.5).abs() < 1e-12);
        assert!((percentile(&xs, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_degenerate_and_deterministic() {
        assert_eq!(bootstrap_ci(&[5.0, 5.0, 5.0], 0.95, 5000, 1), (5.0, 5.0));
        assert_eq!(bootstrap_ci(&[0.3], 0.95, 5000, 1), (0.3, 0.3));
        let a = bootstrap_ci(&[0.0, 1.0], 0.95, 5000, 9);
        let b = bootstrap_ci(&[0.0, 1.0], 0.95, 5000, 9);
        assert_eq!(a, b);
        assert!(a.0 <= 0.5 && 0.5 <= a.1);
        let xs: Vec<f64> = (0..40).map(|i| (i % 7) as f64 / 7.0).collect();
        let (lo, hi) = bootstrap_ci(&xs, 0.95, 5000, 3);
        assert!(lo <= mean(&xs) && mean(&xs) <= hi);
    }
}
