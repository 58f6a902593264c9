//! PNG rasters with JSON sidecars, and small file helpers.
//!
//! All PNGs are written with one fixed encoder configuration so identical
//! rasters always produce identical bytes.

use std::io::Cursor;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{GrayImage, SegMask, ValueSpace};
pub use crate::metrics::sidecar_path;
use crate::umask::{SuperpixelLabeling, UnsupervisedMask};

/// Identity of the lossless codec configuration used for every PNG we write.
pub const PNG_CODEC: &str = "png/zlib-level-9/paeth";

/// Affine map from stored 16-bit values to HU: `hu = raw * slope + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuSidecar {
    pub slope: f64,
    pub intercept: f64,
}

impl Default for HuSidecar {
    /// Stores HU offset by 32768, the usual signed-to-unsigned shift.
    fn default() -> Self {
        Self {
            slope: 1.0,
            intercept: -32768.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSidecar {
    pub count: usize,
    pub iterations_run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSidecar {
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub t: u8,
}

/// Decoded single-channel PNG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayPng {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub samples: Vec<u16>,
}

pub fn encode_png(width: usize, height: usize, bit_depth: u8, samples: &[u16]) -> Result<Vec<u8>> {
    let depth = match bit_depth {
        8 => png::BitDepth::Eight,
        16 => png::BitDepth::Sixteen,
        d => return Err(Error::Parameter(format!("unsupported PNG bit depth {d}"))),
    };
    let data: Vec<u8> = if bit_depth == 8 {
        samples.iter().map(|&v| v as u8).collect()
    } else {
        samples.iter().flat_map(|v| v.to_be_bytes()).collect()
    };
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(depth);
        enc.set_deflate_compression(png::DeflateCompression::Level(9));
        enc.set_filter(png::Filter::Paeth);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("PNG encode: {e}")))?;
        writer
            .write_image_data(&data)
            .map_err(|e| Error::Format(format!("PNG encode: {e}")))?;
        writer.finish().map_err(|e| Error::Format(format!("PNG encode: {e}")))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<GrayPng> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("PNG decode: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG decode: {e}")))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::Format(format!(
            "expected a grayscale PNG, got {:?}",
            info.color_type
        )));
    }
    let buf = &buf[..info.buffer_size()];
    let (bit_depth, samples) = match info.bit_depth {
        png::BitDepth::Eight => (8, buf.iter().map(|&v| u16::from(v)).collect()),
        png::BitDepth::Sixteen => (
            16,
            buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect(),
        ),
        d => return Err(Error::Format(format!("unsupported PNG bit depth {d:?}"))),
    };
    Ok(GrayPng {
        width: info.width as usize,
        height: info.height as usize,
        bit_depth,
        samples,
    })
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_png(path: &Path) -> Result<GrayPng> {
    decode_png(&read_bytes(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes to JSON") + "\n"
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_json_string(value).as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes a Unit8 image as an 8-bit PNG.
pub fn write_gray8(path: &Path, img: &GrayImage) -> Result<()> {
    let samples: Vec<u16> = img.to_u8()?.into_iter().map(u16::from).collect();
    write_bytes(path, &encode_png(img.width(), img.height(), 8, &samples)?)
}

/// Writes an HU image as a 16-bit PNG plus `{slope, intercept}` sidecar.
pub fn write_hu_png(path: &Path, img: &GrayImage, map: HuSidecar) -> Result<()> {
    img.require(ValueSpace::Hu)?;
    if map.slope == 0.0 || !map.slope.is_finite() || !map.intercept.is_finite() {
        return Err(Error::Parameter(format!("invalid HU mapping {map:?}")));
    }
    let samples = img
        .pixels()
        .iter()
        .map(|&hu| {
            let raw = ((f64::from(hu) - map.intercept) / map.slope).round();
            if (0.0..=65535.0).contains(&raw) {
                Ok(raw as u16)
            } else {
                Err(Error::Parameter(format!("HU {hu} not representable with {map:?}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    write_bytes(path, &encode_png(img.width(), img.height(), 16, &samples)?)?;
    write_json(&sidecar_path(path), &map)
}

/// Loads an intensity image: 8-bit PNGs become Unit8, 16-bit PNGs become HU
/// through their sidecar (required).
pub fn read_gray_image(path: &Path) -> Result<GrayImage> {
    let png = read_png(path)?;
    match png.bit_depth {
        8 => GrayImage::new(
            png.width,
            png.height,
            png.samples.iter().map(|&v| f32::from(v)).collect(),
            ValueSpace::Unit8,
        ),
        _ => {
            let side = sidecar_path(path);
            if !side.exists() {
                return Err(Error::Format(format!(
                    "16-bit image {} has no HU sidecar {}",
                    path.display(),
                    side.display()
                )));
            }
            let map: HuSidecar = read_json(&side)?;
            let pixels = png
                .samples
                .iter()
                .map(|&v| (f64::from(v) * map.slope + map.intercept) as f32)
                .collect();
            GrayImage::from_hu(png.width, png.height, pixels)
        }
    }
}

pub fn read_segmask(path: &Path) -> Result<SegMask> {
    let png = read_png(path)?;
    if png.bit_depth != 8 {
        return Err(Error::Format(format!("{}: label masks must be 8-bit", path.display())));
    }
    SegMask::new(png.width, png.height, png.samples.iter().map(|&v| v as u8).collect())
}

pub fn write_segmask(path: &Path, mask: &SegMask) -> Result<()> {
    let samples: Vec<u16> = mask.labels().iter().map(|&v| u16::from(v)).collect();
    write_bytes(path, &encode_png(mask.width(), mask.height(), 8, &samples)?)
}

/// 16-bit label PNG plus `{count, iterations_run}` sidecar.
pub fn write_labeling(path: &Path, labeling: &SuperpixelLabeling) -> Result<()> {
    if labeling.count() > usize::from(u16::MAX) + 1 {
        return Err(Error::Parameter(format!(
            "{} superpixels do not fit a 16-bit label PNG",
            labeling.count()
        )));
    }
    let samples: Vec<u16> = labeling.labels().iter().map(|&l| l as u16).collect();
    write_bytes(path, &encode_png(labeling.width(), labeling.height(), 16, &samples)?)?;
    write_json(
        &sidecar_path(path),
        &LabelSidecar {
            count: labeling.count(),
            iterations_run: labeling.iterations_run(),
        },
    )
}

pub fn read_labeling(path: &Path) -> Result<SuperpixelLabeling> {
    let png = read_png(path)?;
    let side: LabelSidecar = read_json(&sidecar_path(path))?;
    SuperpixelLabeling::new(
        png.width,
        png.height,
        png.samples.iter().map(|&v| u32::from(v)).collect(),
        side.count,
        side.iterations_run,
    )
}

/// 8-bit mask PNG plus `{M, t}` sidecar.
pub fn write_umask(path: &Path, mask: &UnsupervisedMask) -> Result<()> {
    write_gray8(path, mask.values())?;
    write_json(
        &sidecar_path(path),
        &MaskSidecar {
            m: mask.superpixel_count_m(),
            t: mask.threshold_t(),
        },
    )
}

pub fn read_umask(path: &Path) -> Result<UnsupervisedMask> {
    let png = read_png(path)?;
    if png.bit_depth != 8 {
        return Err(Error::Format(format!("{}: masks must be 8-bit", path.display())));
    }
    let side: MaskSidecar = read_json(&sidecar_path(path))?;
    let bytes: Vec<u8> = png.samples.iter().map(|&v| v as u8).collect();
    UnsupervisedMask::from_u8(png.width, png.height, &bytes, side.t, side.m)
}
