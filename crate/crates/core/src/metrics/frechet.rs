//! Gaussian fits of feature sets and the Fréchet distance between them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::features::FeatureSet;
use crate::error::{Error, Result};

/// Covariance eigenvalues below `-NEGATIVE_EIG_TOL * max|eig|` mean the matrix is not PSD.
pub const NEGATIVE_EIG_TOL: f64 = 1e-8;
/// Eigenvalue ratio under which a covariance counts as rank-deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Ridge added to both covariances, relative to their mean diagonal, when either is singular.
pub const RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Column means and unbiased (N-1) covariance of a feature set.
pub fn gaussian_summary(f: &FeatureSet) -> Result<GaussianSummary> {
    summarize_rows(f.n(), f.d(), f.data())
}

pub(crate) fn summarize_rows(n: usize, d: usize, data: &[f32]) -> Result<GaussianSummary> {
    if n < 2 {
        return Err(Error::InsufficientSamples { got: n, required: 2 });
    }
    let x = DMatrix::from_row_iterator(n, d, data.iter().map(|&v| f64::from(v)));
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianSummary { mean, cov, n })
}

/// Square root of a symmetric PSD matrix via eigendecomposition; negative
/// eigenvalues are clamped to zero.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrechetDistance {
    pub value: f64,
    /// `||mu_a - mu_b||^2`
    pub mean_term: f64,
    /// `Tr(Sa + Sb - 2 (Sa Sb)^(1/2))`
    pub trace_term: f64,
    /// A ridge was added because a covariance was singular.
    pub regularized: bool,
    pub ridge: f64,
}

fn eigen_range(cov: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max_abs = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (min, max_abs)
}

/// Squared 2-Wasserstein distance between two Gaussians:
/// `||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^(1/2) Sb Sa^(1/2))^(1/2))`.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<FrechetDistance> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: (d, d),
            actual: (b.dim(), b.dim()),
        });
    }

    let mut deficient = false;
    for (name, cov) in [("first", &a.cov), ("second", &b.cov)] {
        let (min, max_abs) = eigen_range(cov);
        if !min.is_finite() {
            return Err(Error::Numerical(format!("{name} covariance has non-finite eigenvalues")));
        }
        if min < -NEGATIVE_EIG_TOL * max_abs {
            return Err(Error::Numerical(format!(
                "{name} covariance is not positive semi-definite (min eigenvalue {min:e}, max |eigenvalue| {max_abs:e})"
            )));
        }
        deficient |= max_abs == 0.0 || min <= RANK_TOL * max_abs;
    }

    let (mut sa, mut sb) = (a.cov.clone(), b.cov.clone());
    let mut ridge = 0.0;
    if deficient {
        let mean_diag = (sa.trace() + sb.trace()) / (2 * d) as f64;
        ridge = if mean_diag > 0.0 { RIDGE_SCALE * mean_diag } else { RIDGE_SCALE };
        for i in 0..d {
            sa[(i, i)] += ridge;
            sb[(i, i)] += ridge;
        }
    }

    let root_a = sqrt_psd(&sa);
    let inner = &root_a * &sb * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();

    let mean_term = (&a.mean - &b.mean).norm_squared();
    let trace_term = sa.trace() + sb.trace() - 2.0 * tr_sqrt;
    let value = mean_term + trace_term;
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "Fréchet distance is not finite (mean term {mean_term}, trace term {trace_term}, ridge {ridge})"
        )));
    }
    Ok(FrechetDistance {
        value: value.max(0.0),
        mean_term,
        trace_term,
        regularized: deficient,
        ridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Scale, Task};

    fn fs(n: usize, d: usize, data: Vec<f32>) -> FeatureSet {
        FeatureSet::new(n, d, data, Scale::S128, Task::Imagenet, "t").unwrap()
    }

    fn gauss(mean: &[f64], cov_diag: &[f64]) -> GaussianSummary {
        GaussianSummary {
            mean: DVector::from_column_slice(mean),
            cov: DMatrix::from_diagonal(&DVector::from_column_slice(cov_diag)),
            n: 100,
        }
    }

    #[test]
    fn summary_fixtures() {
        let s = gaussian_summary(&fs(4, 2, vec![0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0])).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 1.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, 0.0, 0.0, 4.0 / 3.0]);
        assert!((s.cov - expected).abs().max() < 1e-15);

        let s = gaussian_summary(&fs(2, 1, vec![0.0, 2.0])).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.cov[(0, 0)], 2.0);

        let s = gaussian_summary(&fs(5, 3, vec![1.5; 15])).unwrap();
        assert_eq!(s.cov, DMatrix::zeros(3, 3));
    }

    #[test]
    fn summary_needs_two_rows() {
        assert!(matches!(
            summarize_rows(1, 2, &[1.0, 2.0]),
            Err(Error::InsufficientSamples { got: 1, required: 2 })
        ));
    }

    #[test]
    fn closed_forms() {
        let d = frechet_distance(&gauss(&[0.0], &[1.0]), &gauss(&[1.0], &[1.0])).unwrap();
        assert!((d.value - 1.0).abs() < 1e-9);
        assert!(!d.regularized);

        let d = frechet_distance(&gauss(&[0.0, 0.0], &[1.0, 1.0]), &gauss(&[1.0, 1.0], &[4.0, 4.0])).unwrap();
        assert!((d.value - 4.0).abs() < 1e-9);

        // (mu1 - mu2)^2 + (sigma1 - sigma2)^2 for 1-D
        let d = frechet_distance(&gauss(&[2.0], &[9.0]), &gauss(&[-1.0], &[0.25])).unwrap();
        assert!((d.value - (9.0 + 2.5 * 2.5)).abs() < 1e-9);
    }

    #[test]
    fn identity_is_zero() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let g = GaussianSummary {
            mean: DVector::from_column_slice(&[1.0, -2.0, 3.0]),
            cov,
            n: 10,
        };
        assert!(frechet_distance(&g, &g).unwrap().value.abs() < 1e-9);
    }

    #[test]
    fn singular_covariance_is_regularized_and_flagged() {
        let g = gaussian_summary(&fs(3, 2, vec![1.0; 6])).unwrap();
        let d = frechet_distance(&g, &g).unwrap();
        assert!(d.regularized);
        assert!(d.ridge > 0.0);
        assert!(d.value.abs() < 1e-9);

        // Rank-1 covariance (N=2 < D=3).
        let a = gaussian_summary(&fs(2, 3, vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0])).unwrap();
        let b = gaussian_summary(&fs(2, 3, vec![1.0, 1.0, 1.0, 2.0, 3.0, 4.0])).unwrap();
        let d = frechet_distance(&a, &b).unwrap();
        assert!(d.regularized);
        assert!((d.value - 3.0).abs() < 1e-5, "{}", d.value);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(frechet_distance(&gauss(&[0.0], &[1.0]), &gauss(&[0.0, 0.0], &[1.0, 1.0])).is_err());
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let mut g = gauss(&[0.0, 0.0], &[1.0, 1.0]);
        g.cov[(1, 1)] = -1.0;
        assert!(matches!(frechet_distance(&g, &gauss(&[0.0, 0.0], &[1.0, 1.0])), Err(Error::Numerical(_))));
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let s = sqrt_psd(&m);
        let err = (&s * &s - &m).norm() / m.norm();
        assert!(err < 1e-12);
    }
}
