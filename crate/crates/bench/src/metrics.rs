//! Replication-level performance measures for τ.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Median over replications of ‖τ̂ − τ‖₁.
    pub mae: f64,
    /// ‖median(τ̂) − τ‖₁ with the median taken component-wise.
    pub median_bias: f64,
    /// Fraction of intervals containing τ, averaged over components.
    pub coverage: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `estimates[r][j]` is τ̂_j in replication r; `intervals[r][j]` its (lower, upper).
pub fn metrics(estimates: &[Vec<f64>], truth: &[f64], intervals: &[Vec<(f64, f64)>]) -> Metrics {
    assert!(!estimates.is_empty(), "metrics need at least one replication");
    let l = truth.len();
    let abs_err: Vec<f64> = estimates
        .iter()
        .map(|e| e.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum())
        .collect();
    let median_bias = (0..l)
        .map(|j| {
            let col: Vec<f64> = estimates.iter().map(|e| e[j]).collect();
            (median(&col) - truth[j]).abs()
        })
        .sum();
    let hits: usize = intervals
        .iter()
        .map(|iv| (0..l).filter(|&j| iv[j].0 <= truth[j] && truth[j] <= iv[j].1).count())
        .sum();
    Metrics {
        mae: median(&abs_err),
        median_bias,
        coverage: if intervals.is_empty() {
            f64::NAN
        } else {
            hits as f64 / (intervals.len() * l) as f64
        },
    }
}
