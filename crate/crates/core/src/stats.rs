//! Statistical primitives: the Mann-Whitney U test, speedup factors, R² and
//! percentile bootstrap intervals.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::rng::SplitMix64;

/// Samples with at most this many elements on both sides get an exact p-value.
pub const EXACT_MAX: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("times must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("length mismatch: {0} observed vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("observed values have zero variance")]
    ZeroVariance,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    BadLevel(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// `x` tends to be smaller than `y`.
    Less,
    /// `x` tends to be larger than `y`.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    ExactPermutation,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// U statistic of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub alternative: Alternative,
    pub method: TestMethod,
}

/// Doubled midranks of the pooled sample, so ties stay integral.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // positions i..=j share rank ((i+1) + (j+1)) / 2
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sample Mann-Whitney U test.
///
/// U is computed from midranks. When both samples have at most
/// [`EXACT_MAX`] elements the p-value is exact: it is the fraction of all
/// `C(n, |x|)` assignments of the pooled ranks to `x` whose U is at least as
/// extreme as the observed one (for two-sided, as far from `|x||y|/2`).
/// Larger samples use the tie-corrected normal approximation with
/// continuity correction.
pub fn mann_whitney_u(x: &[f64], y: &[f64], alternative: Alternative) -> Result<TestResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n1 = x.len();
    let n2 = y.len();
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let rank_sum2: u64 = ranks[..n1].iter().sum();
    let offset2 = (n1 * (n1 + 1)) as u64;
    let u = (rank_sum2 - offset2) as f64 / 2.0;

    let (p_value, method) = if n1 <= EXACT_MAX && n2 <= EXACT_MAX {
        (exact_p(&ranks, n1, rank_sum2, alternative), TestMethod::ExactPermutation)
    } else {
        (normal_p(&ranks, n1, n2, u, alternative), TestMethod::NormalApprox)
    };
    Ok(TestResult {
        statistic: u,
        p_value: p_value.clamp(0.0, 1.0),
        alternative,
        method,
    })
}

/// Counts rank-sum outcomes over every size-`n1` subset with a subset-sum
/// table rather than by listing subsets.
fn exact_p(ranks: &[u64], n1: usize, observed2: u64, alternative: Alternative) -> f64 {
    let max_sum: u64 = ranks.iter().sum();
    let width = max_sum as usize + 1;
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0u64; width]; n1 + 1];
    ways[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for k in (1..=n1).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..width).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let dist = &ways[n1];
    let total: u64 = dist.iter().sum();
    let n2 = ranks.len() - n1;
    // centre of the doubled rank sum: n1(n1+1) + n1*n2
    let centre2 = (n1 * (n1 + 1) + n1 * n2) as i64;
    let obs_dev = (observed2 as i64 - centre2).abs();
    let hits: u64 = dist
        .iter()
        .enumerate()
        .filter(|&(s, &c)| {
            c > 0
                && match alternative {
                    Alternative::Less => s as u64 <= observed2,
                    Alternative::Greater => s as u64 >= observed2,
                    Alternative::TwoSided => (s as i64 - centre2).abs() >= obs_dev,
                }
        })
        .map(|(_, &c)| c)
        .sum();
    hits as f64 / total as f64
}

fn normal_p(ranks: &[u64], n1: usize, n2: usize, u: f64, alternative: Alternative) -> f64 {
    let n = (n1 + n2) as f64;
    let mean = (n1 * n2) as f64 / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    match alternative {
        Alternative::TwoSided => {
            let z = ((u - mean).abs() - 0.5).max(0.0) / sd;
            2.0 * normal.sf(z)
        }
        Alternative::Less => normal.cdf((u - mean + 0.5) / sd),
        Alternative::Greater => normal.sf((u - mean - 0.5) / sd),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Speedup,
    Slowdown,
    Parity,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Speedup => "speedup",
            Direction::Slowdown => "slowdown",
            Direction::Parity => "parity",
        }
    }

    pub fn inverse(self) -> Self {
        match self {
            Direction::Speedup => Direction::Slowdown,
            Direction::Slowdown => Direction::Speedup,
            Direction::Parity => Direction::Parity,
        }
    }
}

/// A ratio of two times, always ≥ 1, with the direction of the change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub factor: f64,
    pub direction: Direction,
}

impl Factor {
    /// Factor rounded to one decimal, as reported.
    pub fn rounded(&self) -> f64 {
        round_to(self.factor, 1)
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}× {}", self.factor, self.direction.name())
    }
}

/// How much faster or slower `candidate_ms` is than `baseline_ms`.
pub fn speedup_factor(baseline_ms: f64, candidate_ms: f64) -> Result<Factor, StatsError> {
    for t in [baseline_ms, candidate_ms] {
        if !(t > 0.0 && t.is_finite()) {
            return Err(StatsError::NonPositiveTime(t));
        }
    }
    let direction = if candidate_ms < baseline_ms {
        Direction::Speedup
    } else if candidate_ms > baseline_ms {
        Direction::Slowdown
    } else {
        Direction::Parity
    };
    Ok(Factor {
        factor: baseline_ms.max(candidate_ms) / baseline_ms.min(candidate_ms),
        direction,
    })
}

/// Coefficient of determination `1 − SS_res / SS_tot`. Negative when the
/// predictions do worse than the observed mean.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<f64, StatsError> {
    if y.len() != y_hat.len() {
        return Err(StatsError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.len() < 2 {
        return Err(StatsError::TooFewPoints { needed: 2, got: y.len() });
    }
    let m = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Sum,
}

impl Statistic {
    pub fn eval(self, sample: &[f64]) -> f64 {
        match self {
            Statistic::Mean => mean(sample),
            Statistic::Sum => sample.iter().sum(),
        }
    }
}

/// Percentile bootstrap interval, deterministic for a fixed seed.
pub fn bootstrap_ci(
    sample: &[f64],
    statistic: Statistic,
    level: f64,
    seed: u64,
    resamples: usize,
) -> Result<(f64, f64), StatsError> {
    if sample.len() < 2 {
        return Err(StatsError::TooFewPoints {
            needed: 2,
            got: sample.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    if resamples == 0 {
        return Err(StatsError::TooFewPoints { needed: 1, got: 0 });
    }
    let mut rng = SplitMix64::new(seed);
    let mut scratch = vec![0.0; sample.len()];
    let mut estimates = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in scratch.iter_mut() {
            *slot = sample[rng.below_usize(sample.len())];
        }
        estimates.push(statistic.eval(&scratch));
    }
    estimates.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&estimates, alpha), quantile_sorted(&estimates, 1.0 - alpha)))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn geomean(values: &[f64]) -> f64 {
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

/// Linearly interpolated quantile of an ascending slice. `q` is clamped to
/// `[0, 1]`; an empty slice yields NaN.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

/// Summary of a set of timings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub p10: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: sorted.len(),
            mean: mean(&sorted),
            min: sorted[0],
            p10: quantile_sorted(&sorted, 0.1),
            median: quantile_sorted(&sorted, 0.5),
            p90: quantile_sorted(&sorted, 0.9),
            max: sorted[sorted.len() - 1],
        })
    }
}
