//! Editing unsupervised masks in mask space: lesion patches with chosen
//! shapes and supercluster intensities.

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::umask::UnsupervisedMask;

/// A rectangular block of values copied from another mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamp {
    pub source: UnsupervisedMask,
    /// Source rectangle `(x, y, w, h)`.
    pub region: (usize, usize, usize, usize),
    /// Destination of the rectangle's top-left corner; may be negative or out of bounds.
    pub dest: (i64, i64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatchShape {
    /// Pixels whose centers satisfy `(x-cx)^2/rx^2 + (y-cy)^2/ry^2 <= 1`.
    /// A zero radius selects the pixel column/row containing the center.
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    /// Even-odd fill at pixel centers.
    Polygon(Vec<(f64, f64)>),
    Stamp(Stamp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Blend {
    #[default]
    Replace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSpec {
    pub shape: PatchShape,
    /// Written into the footprint; ignored by stamps, which carry their own values.
    pub intensity: u8,
    pub blend: Blend,
}

impl PatchSpec {
    pub fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, intensity: u8) -> Self {
        Self {
            shape: PatchShape::Ellipse { cx, cy, rx, ry },
            intensity,
            blend: Blend::Replace,
        }
    }

    pub fn polygon(vertices: Vec<(f64, f64)>, intensity: u8) -> Self {
        Self {
            shape: PatchShape::Polygon(vertices),
            intensity,
            blend: Blend::Replace,
        }
    }

    pub fn stamp(stamp: Stamp) -> Self {
        Self {
            shape: PatchShape::Stamp(stamp),
            intensity: 0,
            blend: Blend::Replace,
        }
    }

    pub fn with_intensity(&self, intensity: u8) -> Self {
        Self {
            intensity,
            ..self.clone()
        }
    }
}

/// Result of [`insert_patch`].
#[derive(Debug, Clone, PartialEq)]
pub struct EditedMask {
    pub mask: UnsupervisedMask,
    /// Number of pixels written. Zero means the patch fell outside the image.
    pub footprint_pixels: usize,
}

fn axis_hit(p: f64, c: f64, r: f64) -> Option<f64> {
    if r == 0.0 {
        // Degenerate axis: only the pixel containing the center.
        (p == (c + 0.5).floor()).then_some(0.0)
    } else {
        Some(((p - c) / r).powi(2))
    }
}

/// Raster indices covered by `shape` on a `width`x`height` grid, ascending, with the
/// value each receives.
pub fn rasterize(shape: &PatchShape, intensity: u8, width: usize, height: usize) -> Result<Vec<(usize, u8)>> {
    let mut out = Vec::new();
    match shape {
        PatchShape::Ellipse { cx, cy, rx, ry } => {
            let finite = [cx, cy, rx, ry].iter().all(|v| v.is_finite());
            if !finite || *rx < 0.0 || *ry < 0.0 {
                return Err(Error::Parameter(format!(
                    "invalid ellipse ({cx}, {cy}, {rx}, {ry})"
                )));
            }
            // Inclusive pixel range of the bounding box, clipped to the image.
            let span = |c: f64, r: f64, len: usize| {
                let lo = (c - r).floor().max(0.0);
                let hi = (c + r).ceil().min(len as f64 - 1.0);
                (lo <= hi).then_some((lo as usize, hi as usize))
            };
            if let (Some((x0, x1)), Some((y0, y1))) = (span(*cx, *rx, width), span(*cy, *ry, height)) {
                for y in y0..=y1 {
                    let Some(ty) = axis_hit(y as f64, *cy, *ry) else {
                        continue;
                    };
                    for x in x0..=x1 {
                        match axis_hit(x as f64, *cx, *rx) {
                            Some(tx) if tx + ty <= 1.0 => out.push((y * width + x, intensity)),
                            _ => {}
                        }
                    }
                }
            }
        }
        PatchShape::Polygon(vertices) => {
            if vertices.len() < 3 || vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                return Err(Error::Parameter("polygon needs at least 3 finite vertices".into()));
            }
            for y in 0..height {
                let py = y as f64;
                for x in 0..width {
                    let px = x as f64;
                    let mut inside = false;
                    let mut j = vertices.len() - 1;
                    for i in 0..vertices.len() {
                        let (xi, yi) = vertices[i];
                        let (xj, yj) = vertices[j];
                        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                            inside = !inside;
                        }
                        j = i;
                    }
                    if inside {
                        out.push((y * width + x, intensity));
                    }
                }
            }
        }
        PatchShape::Stamp(stamp) => {
            let (sx, sy, sw, sh) = stamp.region;
            let (src_w, src_h) = stamp.source.dims();
            if sx + sw > src_w || sy + sh > src_h {
                return Err(Error::Parameter(format!(
                    "stamp region {sw}x{sh}+{sx}+{sy} outside {src_w}x{src_h} source"
                )));
            }
            let src = stamp.source.bytes();
            for ry in 0..sh {
                let dy = stamp.dest.1 + ry as i64;
                if dy < 0 || dy >= height as i64 {
                    continue;
                }
                for rx in 0..sw {
                    let dx = stamp.dest.0 + rx as i64;
                    if dx < 0 || dx >= width as i64 {
                        continue;
                    }
                    let v = src[(sy + ry) * src_w + sx + rx];
                    out.push((dy as usize * width + dx as usize, v));
                }
            }
            out.sort_unstable_by_key(|&(p, _)| p);
        }
    }
    Ok(out)
}

fn check_intensity(mask: &UnsupervisedMask, patch: &PatchSpec) -> Result<()> {
    let t = mask.threshold_t();
    match &patch.shape {
        PatchShape::Stamp(stamp) => {
            if let Some(v) = stamp.source.supercluster_values().iter().find(|&&v| v % t != 0) {
                return Err(Error::Validation(format!(
                    "stamp value {v} is not a multiple of the target threshold t={t}"
                )));
            }
        }
        _ => {
            if !patch.intensity.is_multiple_of(t) {
                return Err(Error::Validation(format!(
                    "patch intensity {} is not a multiple of t={t}",
                    patch.intensity
                )));
            }
        }
    }
    Ok(())
}

/// Overwrites the patch footprint; every other pixel is left untouched.
pub fn insert_patch(mask: &UnsupervisedMask, patch: &PatchSpec) -> Result<EditedMask> {
    check_intensity(mask, patch)?;
    let (w, h) = mask.dims();
    let footprint = rasterize(&patch.shape, patch.intensity, w, h)?;
    if footprint.is_empty() {
        log::warn!("patch footprint is empty after clipping; mask left unchanged");
        return Ok(EditedMask {
            mask: mask.clone(),
            footprint_pixels: 0,
        });
    }
    let mut values = mask.bytes();
    for &(p, v) in &footprint {
        values[p] = v;
    }
    let edited = UnsupervisedMask::new(
        GrayImage::from_u8(w, h, &values)?,
        mask.threshold_t(),
        mask.superpixel_count_m(),
    )?;
    Ok(EditedMask {
        mask: edited,
        footprint_pixels: footprint.len(),
    })
}

/// One edited mask per intensity, same footprint each time.
pub fn intensity_sweep(
    mask: &UnsupervisedMask,
    patch: &PatchSpec,
    values: &[u8],
) -> Result<Vec<UnsupervisedMask>> {
    let specs: Vec<PatchSpec> = values.iter().map(|&v| patch.with_intensity(v)).collect();
    for spec in &specs {
        check_intensity(mask, spec)?;
    }
    specs
        .iter()
        .map(|spec| insert_patch(mask, spec).map(|e| e.mask))
        .collect()
}
