//! CT preprocessing: HU windowing, resizing, lung-coverage filtering and
//! 2x2 montage assembly.

use std::ops::Range;

use rand::{RngExt, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::components::connected_components;
use crate::error::{check_dims, Error, Result};
use crate::image::{round_half_up, GrayImage, SegMask, ValueSpace};

/// Slices whose lung coverage falls below this fraction are discarded before montage assembly.
pub const MIN_LUNG_FRACTION: f64 = 0.10;

/// HU range counted as lung parenchyma by the mask-free heuristic.
pub const HEURISTIC_LUNG_HU: (f32, f32) = (-950.0, -200.0);

/// HU above which a pixel is treated as body tissue by the mask-free heuristic.
pub const HEURISTIC_BODY_HU: f32 = -500.0;

/// Maps HU values linearly onto `[0, 255]`, clamping outside `[lo, hi]`.
pub fn hu_window(img: &GrayImage, lo: f32, hi: f32) -> Result<GrayImage> {
    img.require(ValueSpace::Hu)?;
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Parameter(format!(
            "window lower bound {lo} must be below upper bound {hi}"
        )));
    }
    let (lo, hi) = (f64::from(lo), f64::from(hi));
    let span = hi - lo;
    let pixels = img
        .pixels()
        .iter()
        .map(|&x| {
            let f = ((f64::from(x) - lo) / span).clamp(0.0, 1.0);
            round_half_up(255.0 * f) as f32
        })
        .collect();
    let out = GrayImage::new(img.width(), img.height(), pixels, ValueSpace::Unit8)?;
    Ok(match img.spacing_mm() {
        Some((r, c)) => out.with_spacing(r, c),
        None => out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Bilinear,
    Nearest,
}

/// Source coordinate sampled by destination pixel `i` with half-pixel centre alignment.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    (i as f64 + 0.5) * src as f64 / dst as f64 - 0.5
}

fn nearest_index(i: usize, src: usize, dst: usize) -> usize {
    (((i as f64 + 0.5) * src as f64 / dst as f64).floor() as usize).min(src - 1)
}

fn nearest_map<T: Copy>(src: &[T], sw: usize, sh: usize, w: usize, h: usize) -> Vec<T> {
    let xs: Vec<usize> = (0..w).map(|x| nearest_index(x, sw, w)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = nearest_index(y, sh, h) * sw;
        out.extend(xs.iter().map(|&sx| src[row + sx]));
    }
    out
}

fn check_target(w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::Parameter(format!(
            "resize target must be at least 1x1, got {w}x{h}"
        )));
    }
    Ok(())
}

/// Resamples an intensity image. Unit8 images stay Unit8 (bilinear results are
/// rounded half-up); `Nearest` never creates values absent from the input.
pub fn resize(img: &GrayImage, w: usize, h: usize, mode: ResizeMode) -> Result<GrayImage> {
    check_target(w, h)?;
    let (sw, sh) = img.dims();
    let src = img.pixels();
    let pixels = match mode {
        ResizeMode::Nearest => nearest_map(src, sw, sh, w, h),
        ResizeMode::Bilinear => {
            let taps = |i: usize, s: usize, d: usize| {
                let c = source_coord(i, s, d).clamp(0.0, (s - 1) as f64);
                let i0 = c.floor() as usize;
                let i1 = (i0 + 1).min(s - 1);
                (i0, i1, c - i0 as f64)
            };
            let xt: Vec<_> = (0..w).map(|x| taps(x, sw, w)).collect();
            let unit8 = img.value_space() == ValueSpace::Unit8;
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                let (y0, y1, fy) = taps(y, sh, h);
                for &(x0, x1, fx) in &xt {
                    let p = |xx: usize, yy: usize| f64::from(src[yy * sw + xx]);
                    let top = p(x0, y0) + (p(x1, y0) - p(x0, y0)) * fx;
                    let bot = p(x0, y1) + (p(x1, y1) - p(x0, y1)) * fx;
                    let v = top + (bot - top) * fy;
                    out.push(if unit8 {
                        round_half_up(v).clamp(0.0, 255.0) as f32
                    } else {
                        v as f32
                    });
                }
            }
            out
        }
    };
    GrayImage::new(w, h, pixels, img.value_space())
}

/// Nearest-neighbour resampling of a label raster.
pub fn resize_mask(mask: &SegMask, w: usize, h: usize) -> Result<SegMask> {
    check_target(w, h)?;
    let (sw, sh) = mask.dims();
    SegMask::new(w, h, nearest_map(mask.labels(), sw, sh, w, h))
}

/// Fraction of pixels labelled lung.
pub fn lung_fraction(slice: &GrayImage, lung_mask: &SegMask) -> Result<f64> {
    check_dims(slice.dims(), lung_mask.dims())?;
    Ok(lung_mask.count(SegMask::LUNG) as f64 / lung_mask.labels().len() as f64)
}

/// Mask-free lung coverage estimate for HU slices: the fraction of all pixels
/// that lie inside the largest body region (holes filled) with HU in
/// [`HEURISTIC_LUNG_HU`].
pub fn lung_fraction_heuristic(slice: &GrayImage) -> Result<f64> {
    slice.require(ValueSpace::Hu)?;
    let (w, h) = slice.dims();
    let body: Vec<bool> = slice.pixels().iter().map(|&v| v > HEURISTIC_BODY_HU).collect();
    let comps = connected_components(w, h, &body);

    let largest_body = (0..comps.count())
        .filter(|&c| body[comps.first_pixel[c]])
        .max_by(|&a, &b| comps.sizes[a].cmp(&comps.sizes[b]).then(b.cmp(&a)));
    let Some(largest_body) = largest_body else {
        return Ok(0.0);
    };

    // Non-body components that never touch the border are enclosed by tissue.
    let mut touches_border = vec![false; comps.count()];
    for x in 0..w {
        touches_border[comps.ids[x] as usize] = true;
        touches_border[comps.ids[(h - 1) * w + x] as usize] = true;
    }
    for y in 0..h {
        touches_border[comps.ids[y * w] as usize] = true;
        touches_border[comps.ids[y * w + w - 1] as usize] = true;
    }
    // A hole is enclosed by *some* body component; only count holes adjacent to the largest one.
    let mut adjacent_to_body = vec![false; comps.count()];
    crate::components::for_each_adjacent_pair(w, h, |p, q| {
        let (a, b) = (comps.ids[p] as usize, comps.ids[q] as usize);
        if a == largest_body {
            adjacent_to_body[b] = true;
        } else if b == largest_body {
            adjacent_to_body[a] = true;
        }
    });

    let (lo, hi) = HEURISTIC_LUNG_HU;
    let lung = slice
        .pixels()
        .iter()
        .zip(&comps.ids)
        .filter(|&(&v, &c)| {
            let c = c as usize;
            let inside = c == largest_body || (!touches_border[c] && adjacent_to_body[c]);
            inside && (lo..=hi).contains(&v)
        })
        .count();
    Ok(lung as f64 / (w * h) as f64)
}

/// Axially ordered slices of one CT scan.
#[derive(Debug, Clone)]
pub struct CtSeries {
    slices: Vec<GrayImage>,
    patient_id: String,
    lung_masks: Option<Vec<SegMask>>,
}

impl CtSeries {
    /// `slices` run inferior to superior.
    pub fn new(
        patient_id: impl Into<String>,
        slices: Vec<GrayImage>,
        lung_masks: Option<Vec<SegMask>>,
    ) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Parameter("series has no slices".into()))?;
        for s in &slices {
            check_dims(first.dims(), s.dims())?;
            if s.value_space() != first.value_space() {
                return Err(Error::Validation("slices mix value spaces".into()));
            }
        }
        if let Some(masks) = &lung_masks {
            if masks.len() != slices.len() {
                return Err(Error::Validation(format!(
                    "{} lung masks for {} slices",
                    masks.len(),
                    slices.len()
                )));
            }
            for m in masks {
                check_dims(first.dims(), m.dims())?;
            }
        }
        Ok(Self {
            slices,
            patient_id: patient_id.into(),
            lung_masks,
        })
    }

    pub fn slices(&self) -> &[GrayImage] {
        &self.slices
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn lung_masks(&self) -> Option<&[SegMask]> {
        self.lung_masks.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LungFractionSource {
    Masks,
    IntensityHeuristic,
}

/// Four slices tiled 2x2: quartile 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
#[derive(Debug, Clone)]
pub struct Montage {
    pub image: GrayImage,
    /// Indices into the original series.
    pub source_slice_indices: [usize; 4],
    pub seed: u64,
    pub lung_fraction_source: LungFractionSource,
    pub eligible_slices: usize,
}

impl Montage {
    /// Extracts quadrant `q` (0..4) at the source slice size.
    pub fn quadrant(&self, q: usize) -> Result<GrayImage> {
        if q >= 4 {
            return Err(Error::Parameter(format!("quadrant {q} out of range 0..4")));
        }
        let (w, h) = (self.image.width() / 2, self.image.height() / 2);
        self.image.crop((q % 2) * w, (q / 2) * h, w, h)
    }
}

/// Splits `n` items into 4 contiguous ranges whose sizes differ by at most one;
/// the remainder goes to the earlier ranges.
pub fn quartile_ranges(n: usize) -> [Range<usize>; 4] {
    let (base, rem) = (n / 4, n % 4);
    let mut start = 0;
    std::array::from_fn(|q| {
        let len = base + usize::from(q < rem);
        let r = start..start + len;
        start += len;
        r
    })
}

/// Seed of the per-item RNG stream. Depends only on the run seed and the item key,
/// so results do not depend on processing order.
pub fn item_seed(seed: u64, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Per-item RNG: SplitMix64 seeded by [`item_seed`].
pub fn item_rng(seed: u64, key: &str) -> SplitMix64 {
    SplitMix64::seed_from_u64(item_seed(seed, key))
}

/// Drops slices with lung coverage below [`MIN_LUNG_FRACTION`], splits the rest
/// into four axial quartiles, draws one slice per quartile and tiles them 2x2.
pub fn build_montage(series: &CtSeries, seed: u64) -> Result<Montage> {
    let (fractions, source) = match series.lung_masks() {
        Some(masks) => (
            series
                .slices()
                .iter()
                .zip(masks)
                .map(|(s, m)| lung_fraction(s, m))
                .collect::<Result<Vec<_>>>()?,
            LungFractionSource::Masks,
        ),
        None => (
            series
                .slices()
                .iter()
                .map(lung_fraction_heuristic)
                .collect::<Result<Vec<_>>>()?,
            LungFractionSource::IntensityHeuristic,
        ),
    };
    let eligible: Vec<usize> = fractions
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= MIN_LUNG_FRACTION)
        .map(|(i, _)| i)
        .collect();
    if eligible.len() < 4 {
        return Err(Error::SeriesTooShort {
            eligible: eligible.len(),
            required: 4,
        });
    }

    let mut rng = item_rng(seed, series.patient_id());
    let picks = quartile_ranges(eligible.len()).map(|r| eligible[rng.random_range(r)]);

    let (w, h) = series.slices()[0].dims();
    let mut pixels = vec![0.0f32; 4 * w * h];
    for (q, &idx) in picks.iter().enumerate() {
        let src = series.slices()[idx].pixels();
        let (ox, oy) = ((q % 2) * w, (q / 2) * h);
        for y in 0..h {
            let dst = (oy + y) * 2 * w + ox;
            pixels[dst..dst + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    let first = &series.slices()[0];
    let mut image = GrayImage::new(2 * w, 2 * h, pixels, first.value_space())?;
    if let Some((r, c)) = first.spacing_mm() {
        image = image.with_spacing(r, c);
    }
    Ok(Montage {
        image,
        source_slice_indices: picks,
        seed,
        lung_fraction_source: source,
        eligible_slices: eligible.len(),
    })
}
