use std::collections::BTreeMap;

use super::SuperpixelLabeling;
use crate::components::for_each_adjacent_pair;
use crate::error::{check_dims, Result};
use crate::image::SegMask;

/// Under-segmentation error of a superpixel partition against ground-truth regions
/// (one region per distinct label value):
/// `(sum_g sum_{s overlapping g} |s| - N) / N`.
pub fn under_segmentation_error(labeling: &SuperpixelLabeling, gt: &SegMask) -> Result<f64> {
    check_dims(labeling.dims(), gt.dims())?;
    let sizes = labeling.sizes();
    let mut overlaps: BTreeMap<u8, Vec<bool>> = BTreeMap::new();
    for (&s, &g) in labeling.labels().iter().zip(gt.labels()) {
        overlaps.entry(g).or_insert_with(|| vec![false; labeling.count()])[s as usize] = true;
    }
    let covered: usize = overlaps
        .values()
        .flat_map(|hit| hit.iter().zip(&sizes).filter(|(h, _)| **h).map(|(_, &n)| n))
        .sum();
    let n = labeling.labels().len();
    Ok((covered - n) as f64 / n as f64)
}

fn boundary_map<T: PartialEq>(width: usize, height: usize, labels: &[T]) -> Vec<bool> {
    let mut edge = vec![false; labels.len()];
    for_each_adjacent_pair(width, height, |p, q| {
        if labels[p] != labels[q] {
            edge[p] = true;
            edge[q] = true;
        }
    });
    edge
}

/// Fraction of ground-truth boundary pixels that have a superpixel boundary pixel
/// within `tolerance` pixels (Chebyshev distance). 1.0 when the ground truth has no boundary.
pub fn boundary_recall(labeling: &SuperpixelLabeling, gt: &SegMask, tolerance: usize) -> Result<f64> {
    check_dims(labeling.dims(), gt.dims())?;
    let (w, h) = labeling.dims();
    let gt_edge = boundary_map(w, h, gt.labels());
    let sp_edge = boundary_map(w, h, labeling.labels());
    let (mut total, mut hit) = (0usize, 0usize);
    for (p, _) in gt_edge.iter().enumerate().filter(|(_, &e)| e) {
        total += 1;
        let (x, y) = (p % w, p / w);
        let found = (y.saturating_sub(tolerance)..=(y + tolerance).min(h - 1)).any(|yy| {
            (x.saturating_sub(tolerance)..=(x + tolerance).min(w - 1)).any(|xx| sp_edge[yy * w + xx])
        });
        hit += usize::from(found);
    }
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halves(w: usize, h: usize) -> SegMask {
        SegMask::new(w, h, (0..w * h).map(|p| u8::from(p % w >= w / 2)).collect()).unwrap()
    }

    #[test]
    fn aligned_superpixels_have_no_leak() {
        let gt = halves(8, 4);
        let sp = SuperpixelLabeling::new(8, 4, gt.labels().iter().map(|&l| u32::from(l)).collect(), 2, 0)
            .unwrap();
        assert_eq!(under_segmentation_error(&sp, &gt).unwrap(), 0.0);
        assert_eq!(boundary_recall(&sp, &gt, 0).unwrap(), 1.0);
    }

    #[test]
    fn single_superpixel_over_two_halves() {
        let gt = halves(8, 4);
        let sp = SuperpixelLabeling::new(8, 4, vec![0; 32], 1, 0).unwrap();
        assert_eq!(under_segmentation_error(&sp, &gt).unwrap(), 1.0);
        assert_eq!(boundary_recall(&sp, &gt, 2).unwrap(), 0.0);
    }

    #[test]
    fn finer_superpixels_inside_regions_have_no_leak() {
        let gt = halves(8, 4);
        let sp = SuperpixelLabeling::new(8, 4, (0..32).map(|p| (p % 8 / 2) as u32).collect(), 4, 0)
            .unwrap();
        assert_eq!(under_segmentation_error(&sp, &gt).unwrap(), 0.0);
    }

    #[test]
    fn partial_leak() {
        // gt halves at x=4; superpixel 1 spans columns 3..5 and leaks 4 pixels each way.
        let gt = halves(8, 4);
        let labels = (0..32)
            .map(|p| match p % 8 {
                0..=2 => 0,
                3..=4 => 1,
                _ => 2,
            })
            .collect();
        let sp = SuperpixelLabeling::new(8, 4, labels, 3, 0).unwrap();
        // left: 12 + 8, right: 8 + 12 -> (40 - 32) / 32
        assert_eq!(under_segmentation_error(&sp, &gt).unwrap(), 0.25);
        assert_eq!(boundary_recall(&sp, &gt, 0).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let sp = SuperpixelLabeling::new(2, 2, vec![0; 4], 1, 0).unwrap();
        let gt = halves(4, 2);
        assert!(under_segmentation_error(&sp, &gt).is_err());
        assert!(boundary_recall(&sp, &gt, 0).is_err());
    }
}
