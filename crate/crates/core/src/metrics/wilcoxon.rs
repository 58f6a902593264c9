//! Wilcoxon signed-rank test for paired samples.
//!
//! Exact null distribution for up to [`EXACT_MAX_N`] nonzero pairs (tied ranks
//! included, by counting sign assignments over doubled ranks), normal
//! approximation with tie and continuity correction beyond that.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 20;
pub const MIN_NONZERO_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub zeros_dropped: usize,
    /// Rank sum of positive differences `a - b`.
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// P(W+ >= observed) under the null.
    pub p_greater: f64,
    /// P(W+ <= observed) under the null.
    pub p_less: f64,
    pub p_two_sided: f64,
    pub method: WilcoxonMethod,
}

/// Average ranks (1-based) of `values`, ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Validation("paired differences must be finite".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n < MIN_NONZERO_PAIRS {
        return Err(Error::InsufficientData(format!(
            "{n} nonzero paired differences, need at least {MIN_NONZERO_PAIRS}"
        )));
    }

    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&nonzero).filter(|(_, &d)| d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let (p_greater, p_less, method) = if n <= EXACT_MAX_N {
        let (g, l) = exact_tails(&ranks, w_plus);
        (g, l, WilcoxonMethod::Exact)
    } else {
        let (g, l) = normal_tails(&abs, &ranks, w_plus);
        (g, l, WilcoxonMethod::Normal)
    };

    Ok(WilcoxonResult {
        n,
        zeros_dropped: diffs.len() - n,
        w_plus,
        w_minus,
        statistic: w_plus.min(w_minus),
        p_greater,
        p_less,
        p_two_sided: (2.0 * p_greater.min(p_less)).min(1.0),
        method,
    })
}

/// Tail probabilities of W+ by counting all 2^n sign assignments. Ranks are doubled so
/// half-integer tie ranks become integers.
fn exact_tails(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let observed = (w_plus * 2.0).round() as usize;
    let total = (1u64 << ranks.len()) as f64;
    let ge: u64 = counts[observed..].iter().sum();
    let le: u64 = counts[..=observed].iter().sum();
    (ge as f64 / total, le as f64 / total)
}

fn normal_tails(abs: &[f64], ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;

    let mut sorted = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let normal = Normal::standard();
    let p_greater = normal.sf((w_plus - mean - 0.5) / sd);
    let p_less = normal.cdf((w_plus - mean + 0.5) / sd);
    (p_greater.min(1.0), p_less.min(1.0))
}
