//! Summary statistics of error samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of histogram bins over `log₁₀` of the finite positive samples.
pub const HIST_BINS: usize = 40;

/// Histogram of `log₁₀` of the finite positive samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `HIST_BINS + 1` bin edges in `log₁₀` units.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Samples equal to zero, which have no logarithm.
    pub zeros: usize,
}

/// Statistics over the finite samples of a set of errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Number of finite samples.
    pub count: usize,
    /// Number of excluded non-finite samples.
    pub count_inf: usize,
    pub histogram: Histogram,
}

/// Percentile `p ∈ [0, 100]` of sorted data by linear interpolation between
/// order statistics at position `p/100·(n−1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn summarize(samples: &[f64]) -> Result<ErrorStats> {
    let mut finite: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    let count_inf = samples.len() - finite.len();
    if finite.is_empty() {
        return Err(Error::Degenerate(format!("no finite samples among {}", samples.len())));
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let std = (finite.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    finite.sort_by(f64::total_cmp);
    Ok(ErrorStats {
        mean,
        median: percentile(&finite, 50.0),
        p5: percentile(&finite, 5.0),
        p95: percentile(&finite, 95.0),
        std,
        count: finite.len(),
        count_inf,
        histogram: log_histogram(&finite),
    })
}

fn log_histogram(finite: &[f64]) -> Histogram {
    let logs: Vec<f64> = finite.iter().filter(|&&x| x > 0.0).map(|x| x.log10()).collect();
    let zeros = finite.iter().filter(|&&x| x == 0.0).count();
    if logs.is_empty() {
        return Histogram { edges: Vec::new(), counts: Vec::new(), zeros };
    }
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / HIST_BINS as f64;
    let edges: Vec<f64> = (0..=HIST_BINS).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; HIST_BINS];
    for v in logs {
        let b = (((v - lo) / width) as usize).min(HIST_BINS - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts, zeros }
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summarize_examples() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.median), (2.0, 2.0));
        let s = summarize(&[1.0, f64::INFINITY]).unwrap();
        assert_eq!((s.mean, s.count_inf), (1.0, 1));
        assert!(summarize(&[f64::INFINITY]).is_err());
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize(&v).unwrap();
        assert!((s.p5 - 5.95).abs() < 1e-12);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 100);
        assert_eq!(s.histogram.edges.len(), HIST_BINS + 1);
    }

    #[test]
    fn fits_and_correlations() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        assert_eq!(linear_fit(&x, &y), (2.0, 1.0));
        assert_eq!(spearman(&x, &[1.0, 10.0, 100.0, 1000.0]), 1.0);
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), -1.0);
    }
}
