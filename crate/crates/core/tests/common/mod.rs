#![allow(dead_code)]

pub mod pipeline;

use rand::{RngExt, SeedableRng};
use rand_xoshiro::SplitMix64;
use umforge::metrics::{FeatureSet, Scale, Task};
use umforge::{GrayImage, SegMask};

/// Quadrants 10 / 90 / 170 / 250 (TL, TR, BL, BR).
pub fn quadrant_phantom(n: usize) -> GrayImage {
    let h = n / 2;
    let px: Vec<u8> = (0..n * n)
        .map(|i| match (i % n >= h, i / n >= h) {
            (false, false) => 10,
            (true, false) => 90,
            (false, true) => 170,
            (true, true) => 250,
        })
        .collect();
    GrayImage::from_u8(n, n, &px).unwrap()
}

pub fn quadrant_labels(n: usize) -> SegMask {
    let h = n / 2;
    let labels = (0..n * n)
        .map(|i| u8::from(i % n >= h) + 2 * u8::from(i / n >= h))
        .collect();
    SegMask::new(n, n, labels).unwrap()
}

pub fn rng(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Random Unit8 image mixing smooth blobs and noise so SLIC sees some structure.
pub fn random_image(rng: &mut SplitMix64, w: usize, h: usize) -> GrayImage {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(1..5usize))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(2.0..(w.max(h) as f64)),
                rng.random_range(-200.0..200.0),
            )
        })
        .collect();
    let base = rng.random_range(0.0..255.0);
    let noise = rng.random_range(0.0..60.0);
    let px: Vec<u8> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let mut v = base + rng.random_range(-noise..=noise);
            for &(cx, cy, r, a) in &blobs {
                let d2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (r * r);
                v += a * (-d2).exp();
            }
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::from_u8(w, h, &px).unwrap()
}

/// Standard normal draw (Box-Muller).
pub fn normal(rng: &mut SplitMix64) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Full 4x4 set of random feature files for one dataset.
pub fn feature_grid(seed: u64, dataset: &str, n: usize, d: usize) -> Vec<FeatureSet> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for s in Scale::ALL {
        for t in Task::ALL {
            let data = (0..n * d).map(|_| normal(&mut r) as f32).collect();
            out.push(
                FeatureSet::new(n, d, data, s, t, dataset)
                    .unwrap()
                    .with_fingerprint("fixture-extractor"),
            );
        }
    }
    out
}

/// One-sided tail probabilities of W+ by enumerating all 2^n sign patterns of the
/// absolute-difference ranks. Returns `(P(W+ >= w), P(W+ <= w))`.
pub fn brute_force_wilcoxon(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    // Average ranks by counting, independent of any sort-based ranking.
    let ranks: Vec<f64> = abs
        .iter()
        .map(|&v| {
            let below = abs.iter().filter(|&&u| u < v).count() as f64;
            let equal = abs.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        ge += u64::from(w >= observed - 1e-9);
        le += u64::from(w <= observed + 1e-9);
    }
    let total = (1u64 << n) as f64;
    (ge as f64 / total, le as f64 / total)
}

/// Fréchet distance between Gaussians with `tr sqrt(Sa Sb)` taken as the sum of
/// square roots of the (real, non-negative) eigenvalues of the non-symmetric product.
pub fn frechet_by_eigenvalues(
    mu_a: &nalgebra::DVector<f64>,
    cov_a: &nalgebra::DMatrix<f64>,
    mu_b: &nalgebra::DVector<f64>,
    cov_b: &nalgebra::DMatrix<f64>,
) -> f64 {
    let prod = cov_a * cov_b;
    let tr_sqrt: f64 = prod
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.max(0.0).sqrt())
        .sum();
    (mu_a - mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt
}

/// Random mean and well-conditioned covariance in `d` dimensions.
pub fn random_gaussian(rng: &mut SplitMix64, d: usize) -> (nalgebra::DVector<f64>, nalgebra::DMatrix<f64>) {
    let mu = nalgebra::DVector::from_fn(d, |_, _| 2.0 * normal(rng));
    let a = nalgebra::DMatrix::from_fn(d, d, |_, _| normal(rng));
    let cov = &a * a.transpose() / d as f64 + nalgebra::DMatrix::identity(d, d) * 0.5;
    (mu, cov)
}

/// `n` draws from N(mu, cov) as a row-major f32 buffer.
pub fn sample_gaussian(
    rng: &mut SplitMix64,
    mu: &nalgebra::DVector<f64>,
    cov: &nalgebra::DMatrix<f64>,
    n: usize,
) -> Vec<f32> {
    let l = cov.clone().cholesky().expect("covariance is positive definite").l();
    let d = mu.len();
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z = nalgebra::DVector::from_fn(d, |_, _| normal(rng));
        out.extend((mu + &l * z).iter().map(|&v| v as f32));
    }
    out
}
