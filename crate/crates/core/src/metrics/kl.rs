//! KL divergence between HU histograms.

use crate::error::{Error, Result};

/// Probability mass added to every bin before renormalizing.
pub const SMOOTHING: f64 = 1e-8;
pub const DEFAULT_BIN_WIDTH: f64 = 10.0;
pub const DEFAULT_RANGE: (f64, f64) = (-1500.0, 100.0);

/// Normalized histogram over `ceil((hi - lo) / bin_width)` bins. Values outside the
/// range are clamped into the edge bins; `hi` itself lands in the last bin.
pub fn hu_histogram(values: &[f64], bin_width: f64, range: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Parameter(format!("bin width must be positive, got {bin_width}")));
    }
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!("invalid histogram range [{lo}, {hi}]")));
    }
    if values.is_empty() {
        return Err(Error::InsufficientData("histogram of an empty sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("HU sample contains non-finite values".into()));
    }
    let bins = ((hi - lo) / bin_width).ceil() as usize;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let b = ((v - lo) / bin_width).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[b] += 1;
    }
    let n = values.len() as f64;
    Ok(counts.iter().map(|&c| c as f64 / n).collect())
}

/// `KL(P || Q)` in nats after adding [`SMOOTHING`] to every bin of both distributions.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Parameter(format!(
            "distributions must have the same nonzero length ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    let smooth = |d: &[f64]| -> Vec<f64> {
        let total: f64 = d.iter().sum::<f64>() + SMOOTHING * d.len() as f64;
        d.iter().map(|&v| (v + SMOOTHING) / total).collect()
    };
    let (p, q) = (smooth(p), smooth(q));
    let kl: f64 = p.iter().zip(&q).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum();
    Ok(kl.max(0.0))
}

/// KL divergence of the real HU distribution from the synthetic one.
pub fn kl_hu_histogram(real_values: &[f64], synth_values: &[f64], bin_width: f64, range: (f64, f64)) -> Result<f64> {
    let p = hu_histogram(real_values, bin_width, range)?;
    let q = hu_histogram(synth_values, bin_width, range)?;
    kl_divergence(&p, &q)
}
