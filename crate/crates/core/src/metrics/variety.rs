//! Average-image compressed size: a blurrier mean image (more varied set)
//! compresses better. Sizes are only comparable under the same codec.

use crate::error::{check_dims, Error, Result};
use crate::image::GrayImage;
use crate::io::{encode_png, PNG_CODEC};

#[derive(Debug, Clone, PartialEq)]
pub struct AverageImageSize {
    pub average: GrayImage,
    pub bytes: usize,
    pub codec: &'static str,
}

/// Lossless size of a Unit8 image under the fixed codec configuration.
pub fn compressed_size(img: &GrayImage) -> Result<usize> {
    let samples: Vec<u16> = img.to_u8()?.into_iter().map(u16::from).collect();
    Ok(encode_png(img.width(), img.height(), 8, &samples)?.len())
}

/// Pixel-wise mean (rounded half-up) of Unit8 images and its compressed size.
pub fn avg_image_compressed_size(images: &[GrayImage]) -> Result<AverageImageSize> {
    let first = images
        .first()
        .ok_or_else(|| Error::InsufficientData("no images to average".into()))?;
    let mut sums = vec![0u64; first.len()];
    for img in images {
        check_dims(first.dims(), img.dims())?;
        for (s, v) in sums.iter_mut().zip(img.to_u8()?) {
            *s += u64::from(v);
        }
    }
    let n = images.len() as u64;
    let mean: Vec<u8> = sums.iter().map(|&s| ((2 * s + n) / (2 * n)) as u8).collect();
    let average = GrayImage::from_u8(first.width(), first.height(), &mean)?;
    let bytes = compressed_size(&average)?;
    Ok(AverageImageSize {
        average,
        bytes,
        codec: PNG_CODEC,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueSpace;

    #[test]
    fn single_image_is_its_own_average() {
        let px: Vec<u8> = (0..256).map(|v| v as u8).collect();
        let img = GrayImage::from_u8(16, 16, &px).unwrap();
        let out = avg_image_compressed_size(std::slice::from_ref(&img)).unwrap();
        assert_eq!(out.average, img);
        assert_eq!(out.bytes, compressed_size(&img).unwrap());
        assert_eq!(out.codec, PNG_CODEC);
    }

    #[test]
    fn mean_rounds_half_up() {
        let a = GrayImage::from_u8(1, 1, &[0]).unwrap();
        let b = GrayImage::from_u8(1, 1, &[255]).unwrap();
        let out = avg_image_compressed_size(&[a, b]).unwrap();
        assert_eq!(out.average.to_u8().unwrap(), vec![128]);
    }

    #[test]
    fn errors() {
        assert!(avg_image_compressed_size(&[]).is_err());
        let a = GrayImage::constant(2, 2, 0.0, ValueSpace::Unit8).unwrap();
        let b = GrayImage::constant(3, 2, 0.0, ValueSpace::Unit8).unwrap();
        assert!(avg_image_compressed_size(&[a, b]).is_err());
    }
}
