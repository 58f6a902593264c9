//! Unsupervised masks: superpixels whose mean intensities are quantized into
//! superclusters by an intensity gap `t`.

mod quality;
mod slic;

pub use quality::{boundary_recall, under_segmentation_error};
pub use slic::{slic, SlicParams, SuperpixelLabeling, CONVERGENCE_PX};

use std::collections::BTreeSet;

use crate::error::{check_dims, Error, Result};
use crate::image::{GrayImage, ValueSpace};

/// Quantized per-pixel condition map. Every value is a multiple of `threshold_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsupervisedMask {
    values: GrayImage,
    threshold_t: u8,
    superpixel_count_m: Option<usize>,
    supercluster_values: Vec<u8>,
}

impl UnsupervisedMask {
    /// Validates `values` against the mask invariants.
    pub fn new(values: GrayImage, threshold_t: u8, superpixel_count_m: Option<usize>) -> Result<Self> {
        check_threshold(u32::from(threshold_t))?;
        let bytes = values
            .to_u8()
            .map_err(|_| Error::Validation("unsupervised mask must be a Unit8 raster".into()))?;
        if let Some(p) = bytes.iter().position(|v| v % threshold_t != 0) {
            return Err(Error::Validation(format!(
                "mask value {} at pixel {p} is not a multiple of t={threshold_t}",
                bytes[p]
            )));
        }
        let supercluster_values: Vec<u8> = bytes.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        Ok(Self {
            values,
            threshold_t,
            superpixel_count_m,
            supercluster_values,
        })
    }

    pub fn from_u8(
        width: usize,
        height: usize,
        values: &[u8],
        threshold_t: u8,
        superpixel_count_m: Option<usize>,
    ) -> Result<Self> {
        Self::new(GrayImage::from_u8(width, height, values)?, threshold_t, superpixel_count_m)
    }

    pub fn values(&self) -> &GrayImage {
        &self.values
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.values.pixels().iter().map(|&v| v as u8).collect()
    }

    pub fn threshold_t(&self) -> u8 {
        self.threshold_t
    }

    pub fn superpixel_count_m(&self) -> Option<usize> {
        self.superpixel_count_m
    }

    /// Distinct values present, ascending.
    pub fn supercluster_values(&self) -> &[u8] {
        &self.supercluster_values
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    /// Upper bound on the number of distinct values for threshold `t`: `ceil(256 / t)`.
    pub fn max_superclusters(t: u8) -> usize {
        256usize.div_ceil(usize::from(t))
    }

    /// Re-checks every invariant; used on masks arriving from outside the crate.
    pub fn validate(&self) -> Result<()> {
        Self::new(self.values.clone(), self.threshold_t, self.superpixel_count_m).map(|_| ())
    }
}

pub fn check_threshold(t: u32) -> Result<u8> {
    if t == 0 || t >= 256 {
        return Err(Error::Parameter(format!("threshold t={t} must lie in 1..=255")));
    }
    Ok(t as u8)
}

/// Replaces every pixel by the mean of its superpixel, rounded half-up.
pub fn assign_mean_intensity(labeling: &SuperpixelLabeling, img: &GrayImage) -> Result<GrayImage> {
    check_dims(labeling.dims(), img.dims())?;
    let bytes = img.to_u8()?;
    let mut sums = vec![(0u64, 0u64); labeling.count()];
    for (&l, &v) in labeling.labels().iter().zip(&bytes) {
        let s = &mut sums[l as usize];
        s.0 += u64::from(v);
        s.1 += 1;
    }
    // floor(sum / n + 1/2) in exact integer arithmetic.
    let means: Vec<u8> = sums
        .iter()
        .map(|&(s, n)| ((2 * s + n) / (2 * n)) as u8)
        .collect();
    let out: Vec<u8> = labeling.labels().iter().map(|&l| means[l as usize]).collect();
    GrayImage::from_u8(img.width(), img.height(), &out)
}

/// `v -> floor(v / t) * t` on every pixel.
pub fn quantize_superclusters(meanimg: &GrayImage, t: u32) -> Result<UnsupervisedMask> {
    let t = check_threshold(t)?;
    if meanimg.value_space() != ValueSpace::Unit8 {
        return Err(Error::Parameter("supercluster quantization needs a Unit8 image".into()));
    }
    let q: Vec<u8> = meanimg.to_u8()?.iter().map(|&v| v / t * t).collect();
    UnsupervisedMask::from_u8(meanimg.width(), meanimg.height(), &q, t, None)
}

/// SLIC superpixels, mean-intensity assignment, then supercluster quantization.
pub fn generate_unsupervised_mask(img: &GrayImage, params: &SlicParams, t: u32) -> Result<UnsupervisedMask> {
    Ok(generate_with_labeling(img, params, t)?.0)
}

/// Like [`generate_unsupervised_mask`], also returning the intermediate superpixels.
pub fn generate_with_labeling(
    img: &GrayImage,
    params: &SlicParams,
    t: u32,
) -> Result<(UnsupervisedMask, SuperpixelLabeling)> {
    check_threshold(t)?;
    let labeling = slic(img, params)?;
    let mean = assign_mean_intensity(&labeling, img)?;
    let mut mask = quantize_superclusters(&mean, t)?;
    mask.superpixel_count_m = Some(params.superpixels);
    Ok((mask, labeling))
}
