//! Raster containers shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Units carried by a [`GrayImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueSpace {
    /// Hounsfield units, arbitrary finite floats.
    Hu,
    /// Normalized 8-bit intensities: integral values in `[0, 255]`.
    Unit8,
}

/// Row-major 2-D scalar raster.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    value_space: ValueSpace,
    spacing_mm: Option<(f32, f32)>,
}

impl GrayImage {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f32>,
        value_space: ValueSpace,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Parameter(format!(
                "pixel buffer has {} values, expected {}x{}={}",
                pixels.len(),
                width,
                height,
                width * height
            )));
        }
        match value_space {
            ValueSpace::Hu => {
                if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Validation(format!("non-finite HU value at index {i}")));
                }
            }
            ValueSpace::Unit8 => {
                if let Some(i) = pixels
                    .iter()
                    .position(|&v| !(0.0..=255.0).contains(&v) || v.fract() != 0.0)
                {
                    return Err(Error::Validation(format!(
                        "Unit8 image holds non-integral or out-of-range value {} at index {i}",
                        pixels[i]
                    )));
                }
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
            value_space,
            spacing_mm: None,
        })
    }

    pub fn from_u8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            pixels.iter().map(|&v| f32::from(v)).collect(),
            ValueSpace::Unit8,
        )
    }

    pub fn from_hu(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        Self::new(width, height, pixels, ValueSpace::Hu)
    }

    pub fn constant(width: usize, height: usize, value: f32, value_space: ValueSpace) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], value_space)
    }

    pub fn with_spacing(mut self, row_mm: f32, col_mm: f32) -> Self {
        self.spacing_mm = Some((row_mm, col_mm));
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn value_space(&self) -> ValueSpace {
        self.value_space
    }

    pub fn spacing_mm(&self) -> Option<(f32, f32)> {
        self.spacing_mm
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Pixel values as bytes. Only valid for `Unit8` images.
    pub fn to_u8(&self) -> Result<Vec<u8>> {
        self.require(ValueSpace::Unit8)?;
        Ok(self.pixels.iter().map(|&v| v as u8).collect())
    }

    pub(crate) fn require(&self, space: ValueSpace) -> Result<()> {
        if self.value_space != space {
            return Err(Error::Parameter(format!(
                "expected {space:?} image, got {:?}",
                self.value_space
            )));
        }
        Ok(())
    }

    /// Copies a `w`x`h` window starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(Error::Parameter(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            pixels.extend_from_slice(&self.pixels[row + x0..row + x0 + w]);
        }
        Ok(Self {
            width: w,
            height: h,
            pixels,
            value_space: self.value_space,
            spacing_mm: self.spacing_mm,
        })
    }
}

/// Per-pixel class labels. The conventional classes are [`SegMask::BACKGROUND`],
/// [`SegMask::LUNG`] and [`SegMask::LESION`], but any `u8` label is accepted so
/// arbitrary ground-truth region maps can be loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl SegMask {
    pub const BACKGROUND: u8 = 0;
    pub const LUNG: u8 = 1;
    pub const LESION: u8 = 2;

    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Parameter(format!(
                "segmentation buffer has {} labels for {width}x{height}",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// `floor(x + 0.5)`: ties always go up, independent of platform rounding mode.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}
